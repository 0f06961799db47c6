#include "rlpm/rcme.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rlpm/error.hpp"
#include "rlpm/parallel.hpp"

namespace rlpm {

std::string to_string(Linkage linkage) {
  switch (linkage) {
    case Linkage::Single: return "single";
    case Linkage::Complete: return "complete";
    case Linkage::Average: return "average";
  }
  return "average";
}

Linkage parse_linkage(const std::string& name) {
  if (name == "single") return Linkage::Single;
  if (name == "complete") return Linkage::Complete;
  if (name == "average") return Linkage::Average;
  throw Error(ErrorKind::InvalidArgument, "unknown linkage '" + name + "'");
}

CorrelationMatrixSet build_cms(const ReturnPanel& rp, std::size_t window, std::size_t stride) {
  if (stride == 0) {
    throw Error(ErrorKind::InvalidArgument, "CMS stride must be positive");
  }
  if (window < 2 || rp.days() < window) {
    throw Error(ErrorKind::InsufficientHistory,
                "return panel of " + std::to_string(rp.days()) + " days is shorter than window " +
                    std::to_string(window));
  }
  CorrelationMatrixSet cms;
  cms.window = window;
  cms.stride = stride;
  for (std::size_t t = window - 1; t < rp.days(); t += stride) {
    cms.entries.push_back(rolling_correlation(rp, t, window));
    cms.anchor_times.push_back(t);
  }
  return cms;
}

double correlation_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "correlation matrices differ in dimension");
  }
  return (a - b).norm();
}

double correlation_distance(const CorrelationMatrix& a, const CorrelationMatrix& b) {
  return correlation_distance(a.values, b.values);
}

CorrelationDistanceMatrix build_cmdm(const CorrelationMatrixSet& cms, std::size_t jobs) {
  const std::size_t m = cms.size();
  if (m < 2) {
    throw Error(ErrorKind::InvalidArgument, "distance matrix needs at least 2 correlation matrices");
  }
  CorrelationDistanceMatrix out;
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  parallel_for(m, jobs, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          correlation_distance(cms.entries[i], cms.entries[j]);
    }
  });
  out.values.triangularView<Eigen::StrictlyLower>() = out.values.transpose();
  return out;
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

class Agglomerator {
 public:
  Agglomerator(const Eigen::MatrixXd& d, Linkage linkage)
      : d_(d), linkage_(linkage), m_(static_cast<std::size_t>(d.rows())),
        active_(m_, true), size_(m_, 1), nn_(m_, kNone),
        nd_(m_, std::numeric_limits<double>::infinity()), members_(m_) {
    for (std::size_t i = 0; i < m_; ++i) {
      members_[i] = {i};
      refresh(i);
    }
  }

  std::size_t clusters() const { return active_count_; }

  /// Performs one merge and returns its height.
  double merge_next() {
    std::size_t a = kNone;
    for (std::size_t i = 0; i < m_; ++i) {
      if (active_[i] && nn_[i] != kNone && (a == kNone || nd_[i] < nd_[a])) a = i;
    }
    const std::size_t b = nn_[a];
    const double height = nd_[a];

    for (std::size_t k = 0; k < m_; ++k) {
      if (!active_[k] || k == a || k == b) continue;
      const double dak = at(a, k);
      const double dbk = at(b, k);
      double merged = 0.0;
      switch (linkage_) {
        case Linkage::Single: merged = std::min(dak, dbk); break;
        case Linkage::Complete: merged = std::max(dak, dbk); break;
        case Linkage::Average:
          merged = (static_cast<double>(size_[a]) * dak + static_cast<double>(size_[b]) * dbk) /
                   static_cast<double>(size_[a] + size_[b]);
          break;
      }
      set(a, k, merged);
    }
    active_[b] = false;
    --active_count_;
    size_[a] += size_[b];
    members_[a].insert(members_[a].end(), members_[b].begin(), members_[b].end());
    members_[b].clear();
    nn_[b] = kNone;

    refresh(a);
    for (std::size_t k = 0; k < b; ++k) {
      if (!active_[k] || k == a) continue;
      if (nn_[k] == a || nn_[k] == b) {
        refresh(k);
      } else if (k < a) {
        const double dka = at(k, a);
        if (dka < nd_[k] || (dka == nd_[k] && a < nn_[k])) {
          nn_[k] = a;
          nd_[k] = dka;
        }
      }
    }
    return height;
  }

  /// Labels by cluster slot order; a slot's index is its lowest member.
  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out(m_, 0);
    std::size_t label = 0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (!active_[i]) continue;
      for (std::size_t member : members_[i]) out[member] = label;
      ++label;
    }
    return out;
  }

 private:
  double at(std::size_t i, std::size_t j) const {
    return d_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  void set(std::size_t i, std::size_t j, double v) {
    d_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    d_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
  }
  void refresh(std::size_t i) {
    nn_[i] = kNone;
    nd_[i] = std::numeric_limits<double>::infinity();
    for (std::size_t j = i + 1; j < m_; ++j) {
      if (active_[j] && at(i, j) < nd_[i]) {
        nn_[i] = j;
        nd_[i] = at(i, j);
      }
    }
  }

  Eigen::MatrixXd d_;
  Linkage linkage_;
  std::size_t m_;
  std::size_t active_count_ = m_;
  std::vector<bool> active_;
  std::vector<std::size_t> size_;
  std::vector<std::size_t> nn_;  // nearest active neighbour with a higher index
  std::vector<double> nd_;
  std::vector<std::vector<std::size_t>> members_;
};

}  // namespace

ClusterAssignment cluster(const CorrelationDistanceMatrix& cmdm, std::size_t k, Linkage linkage,
                          const std::vector<std::size_t>& anchor_times) {
  const std::size_t m = static_cast<std::size_t>(cmdm.values.rows());
  if (k < 1 || k > m) {
    throw Error(ErrorKind::InvalidK,
                "cluster count " + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
  }
  if (!anchor_times.empty() && anchor_times.size() != m) {
    throw Error(ErrorKind::DimensionMismatch, "anchor time list does not match distance matrix");
  }
  Agglomerator agg(cmdm.values, linkage);
  ClusterAssignment ca;
  ca.k = k;
  ca.linkage = linkage;
  if (k == m) ca.labels = agg.labels();
  while (agg.clusters() > 1) {
    ca.merge_heights.push_back(agg.merge_next());
    if (agg.clusters() == k) ca.labels = agg.labels();
  }
  ca.member_times.assign(k, {});
  for (std::size_t i = 0; i < m; ++i) {
    ca.member_times[ca.labels[i]].push_back(anchor_times.empty() ? i : anchor_times[i]);
  }
  return ca;
}

RepresentativeSet representative_matrices(const ClusterAssignment& ca,
                                          const CorrelationMatrixSet& cms) {
  if (ca.labels.size() != cms.size()) {
    throw Error(ErrorKind::DimensionMismatch, "cluster labels do not cover the CMS");
  }
  const Eigen::Index n = cms.entries.empty() ? 0 : cms.entries.front().values.rows();
  RepresentativeSet rs;
  rs.window = cms.window;
  rs.stride = cms.stride;
  rs.linkage = ca.linkage;
  rs.matrices.assign(ca.k, CorrelationMatrix{Eigen::MatrixXd::Zero(n, n), cms.window, 0});
  rs.member_times.assign(ca.k, {});
  std::vector<std::size_t> member_count(ca.k, 0);
  for (std::size_t i = 0; i < cms.size(); ++i) {
    const std::size_t label = ca.labels[i];
    rs.matrices[label].values += cms.entries[i].values;
    rs.member_times[label].push_back(cms.anchor_times[i]);
    ++member_count[label];
  }
  for (std::size_t c = 0; c < ca.k; ++c) {
    if (member_count[c] == 0) {
      throw Error(ErrorKind::EmptyCluster, "cluster " + std::to_string(c) + " has no members");
    }
    auto& values = rs.matrices[c].values;
    values /= static_cast<double>(member_count[c]);
    values.diagonal().setOnes();
    rs.matrices[c].anchor_time = rs.member_times[c].back();
  }
  return rs;
}

std::size_t nearest_representative(const Eigen::MatrixXd& current, const RepresentativeSet& rs) {
  if (rs.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "empty representative set");
  }
  std::size_t best = 0;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double d = correlation_distance(current, rs.matrices[i].values);
    if (d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  return best;
}

std::size_t nearest_representative(const CorrelationMatrix& current, const RepresentativeSet& rs) {
  return nearest_representative(current.values, rs);
}

namespace {

constexpr const char* kRepFormat = "rlpm-representatives";
constexpr int kRepVersion = 1;

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw Error(ErrorKind::Io, "cannot open " + path.string());
  }

  std::istringstream next(const std::string& expected_key) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      std::string key;
      ss >> key;
      if (key != expected_key) fail("expected '" + expected_key + "', found '" + key + "'");
      return ss;
    }
    fail("unexpected end of file, expected '" + expected_key + "'");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::ArtifactFormat,
                path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

  template <typename T>
  T read(std::istringstream& ss, const char* what) const {
    T value{};
    if (!(ss >> value)) fail(std::string("bad or missing ") + what);
    return value;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_representatives(const RepresentativeSet& rs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const std::size_t n = rs.dim();
  out << "# representative correlation matrices (row-major), see docs/formats.md\n";
  out << "format " << kRepFormat << ' ' << kRepVersion << '\n';
  out << "n " << n << '\n';
  out << "k " << rs.size() << '\n';
  out << "window " << rs.window << '\n';
  out << "stride " << rs.stride << '\n';
  out << "linkage " << to_string(rs.linkage) << '\n';
  out << "assets";
  for (const auto& id : rs.asset_ids) out << ' ' << id;
  out << '\n';
  for (std::size_t r = 0; r < rs.size(); ++r) {
    const auto& values = rs.matrices[r].values;
    out << "representative " << r << ' ' << rs.member_times[r].size() << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      out << "row";
      for (Eigen::Index j = 0; j < values.cols(); ++j) out << ' ' << shortest(values(i, j));
      out << '\n';
    }
    out << "members";
    for (std::size_t t : rs.member_times[r]) out << ' ' << t;
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

RepresentativeSet load_representatives(const std::filesystem::path& path) {
  LineReader reader(path);
  RepresentativeSet rs;
  {
    auto ss = reader.next("format");
    const auto name = reader.read<std::string>(ss, "format name");
    const auto version = reader.read<int>(ss, "format version");
    if (name != kRepFormat || version != kRepVersion) {
      reader.fail("unsupported format '" + name + " " + std::to_string(version) + "'");
    }
  }
  auto scalar = [&](const char* key) {
    auto ss = reader.next(key);
    return reader.read<std::size_t>(ss, key);
  };
  const std::size_t n = scalar("n");
  const std::size_t k = scalar("k");
  rs.window = scalar("window");
  rs.stride = scalar("stride");
  {
    auto ss = reader.next("linkage");
    try {
      rs.linkage = parse_linkage(reader.read<std::string>(ss, "linkage"));
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }
  {
    auto ss = reader.next("assets");
    std::string id;
    while (ss >> id) rs.asset_ids.push_back(id);
    if (rs.asset_ids.size() != n) reader.fail("asset id count does not match n");
  }
  if (n == 0 || k == 0) reader.fail("n and k must be positive");
  for (std::size_t r = 0; r < k; ++r) {
    auto header = reader.next("representative");
    if (reader.read<std::size_t>(header, "representative index") != r) {
      reader.fail("representatives out of order");
    }
    const auto count = reader.read<std::size_t>(header, "member count");
    CorrelationMatrix cm;
    cm.window = rs.window;
    cm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      auto row = reader.next("row");
      for (std::size_t j = 0; j < n; ++j) {
        cm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            reader.read<double>(row, "matrix entry");
      }
      std::string extra;
      if (row >> extra) reader.fail("too many entries in matrix row");
    }
    auto members = reader.next("members");
    std::vector<std::size_t> times;
    std::size_t t = 0;
    while (members >> t) times.push_back(t);
    if (times.size() != count || count == 0) reader.fail("member list length mismatch");
    cm.anchor_time = times.back();
    if (!cm.values.isApprox(cm.values.transpose(), 1e-12) ||
        !(cm.values.diagonal().array() == 1.0).all()) {
      reader.fail("representative " + std::to_string(r) + " is not a unit-diagonal symmetric matrix");
    }
    rs.matrices.push_back(std::move(cm));
    rs.member_times.push_back(std::move(times));
  }
  return rs;
}

}  // namespace rlpm
