#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "rlpm/market_data.hpp"

namespace rlpm {

/// Rolling correlation matrices, one per anchor time.
struct CorrelationMatrixSet {
  std::vector<CorrelationMatrix> entries;
  std::vector<std::size_t> anchor_times;
  std::size_t window = 0;
  std::size_t stride = 1;

  std::size_t size() const { return entries.size(); }
};

struct CorrelationDistanceMatrix {
  Eigen::MatrixXd values;  // m x m
};

enum class Linkage { Single, Complete, Average };

std::string to_string(Linkage linkage);
Linkage parse_linkage(const std::string& name);

struct ClusterAssignment {
  std::vector<std::size_t> labels;  // per CMS entry, in [0, k)
  std::size_t k = 0;
  Linkage linkage = Linkage::Average;
  std::vector<std::vector<std::size_t>> member_times;
  /// Merge distances of the agglomeration in the order merges happened,
  /// including those beyond the cut (the full dendrogram down to one cluster).
  std::vector<double> merge_heights;
};

struct RepresentativeSet {
  std::vector<std::string> asset_ids;
  std::vector<CorrelationMatrix> matrices;
  std::vector<std::vector<std::size_t>> member_times;
  std::size_t window = 0;
  std::size_t stride = 1;
  Linkage linkage = Linkage::Average;

  std::size_t size() const { return matrices.size(); }
  std::size_t dim() const { return matrices.empty() ? 0 : matrices.front().dim(); }
};

CorrelationMatrixSet build_cms(const ReturnPanel& rp, std::size_t window, std::size_t stride = 1);

/// Frobenius norm of a - b.
double correlation_distance(const CorrelationMatrix& a, const CorrelationMatrix& b);
double correlation_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Pairwise distances; rows may be computed on up to `jobs` threads with
/// bit-identical output.
CorrelationDistanceMatrix build_cmdm(const CorrelationMatrixSet& cms, std::size_t jobs = 1);

/// Agglomerative clustering on a precomputed distance matrix, cut at exactly
/// k clusters. Equal merge distances resolve to the lowest (i, j) cluster pair,
/// where a cluster is indexed by its lowest member. Labels are numbered in
/// order of each cluster's first member.
ClusterAssignment cluster(const CorrelationDistanceMatrix& cmdm, std::size_t k,
                          Linkage linkage = Linkage::Average,
                          const std::vector<std::size_t>& anchor_times = {});

RepresentativeSet representative_matrices(const ClusterAssignment& ca,
                                          const CorrelationMatrixSet& cms);

/// Index of the representative closest to `current`; ties go to the lowest index.
std::size_t nearest_representative(const CorrelationMatrix& current, const RepresentativeSet& rs);
std::size_t nearest_representative(const Eigen::MatrixXd& current, const RepresentativeSet& rs);

void save_representatives(const RepresentativeSet& rs, const std::filesystem::path& path);
RepresentativeSet load_representatives(const std::filesystem::path& path);

}  // namespace rlpm
