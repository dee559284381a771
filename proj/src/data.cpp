#include "dial/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dial/error.hpp"

namespace dial {

void DomainDataset::validate() const {
  if (classes < 2) throw Error(ErrorCode::BadSpec, "dataset needs at least two classes");
  if (source_x.rows() == 0) throw Error(ErrorCode::BadSpec, "dataset has no source rows");
  if (target_x.rows() == 0) throw Error(ErrorCode::BadSpec, "dataset has no target rows");
  if (source_x.cols() != target_x.cols()) {
    throw Error(ErrorCode::BadSpec, "source and target feature widths differ");
  }
  if (source_y.size() != source_x.rows()) {
    throw Error(ErrorCode::BadSpec, "source label count does not match source rows");
  }
  for (int y : source_y) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error(ErrorCode::BadSpec, "source label " + std::to_string(y) + " out of range");
    }
  }
  if (target_y) {
    if (target_y->size() != target_x.rows()) {
      throw Error(ErrorCode::BadSpec, "target label count does not match target rows");
    }
    for (int y : *target_y) {
      if (y < -1 || y >= static_cast<int>(classes)) {
        throw Error(ErrorCode::BadSpec, "target label " + std::to_string(y) + " out of range");
      }
    }
  }
}

void rotate_about(Matrix& x, double deg, double cx, double cy) {
  if (x.cols() < 2) throw Error(ErrorCode::BadSpec, "rotation needs two dimensions");
  const double rad = deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double u = x(i, 0) - cx;
    const double v = x(i, 1) - cy;
    x(i, 0) = cx + c * u - s * v;
    x(i, 1) = cy + s * u + c * v;
  }
}

namespace {

constexpr double kBlobRadius = 5.0;

// Stream ids for derive_seed; one per independent consumer.
enum Stream : std::uint64_t {
  kCenters = 1,
  kSourceDraws = 2,
  kTargetDraws = 3,
  kLabelNoise = 4,
};

Matrix draw_blobs(const std::vector<std::vector<double>>& centers, std::size_t rows,
                  std::vector<int>& labels, RngStream& rng) {
  const std::size_t k = centers.size();
  const std::size_t d = centers.front().size();
  Matrix x(rows, d);
  labels.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t y = i % k;
    labels[i] = static_cast<int>(y);
    for (std::size_t c = 0; c < d; ++c) x(i, c) = centers[y][c] + rng.standard_normal();
  }
  return x;
}

void draw_moon(RngStream& rng, int label, double noise_sd, double& px, double& py) {
  const double t = std::numbers::pi * rng.uniform01();
  if (label == 0) {
    px = std::cos(t);
    py = std::sin(t);
  } else {
    px = 1.0 - std::cos(t);
    py = 0.5 - std::sin(t);
  }
  px += noise_sd * rng.standard_normal();
  py += noise_sd * rng.standard_normal();
}

}  // namespace

DomainDataset gen_blobs(std::size_t classes, std::size_t dim, std::size_t n, std::size_t m,
                        const ShiftSpec& shift, std::uint64_t seed) {
  if (classes < 2) throw Error(ErrorCode::BadSpec, "blobs need K >= 2");
  if (dim < 2) throw Error(ErrorCode::BadSpec, "blobs need d >= 2");
  if (n < 4 * classes || m < 4 * classes) {
    throw Error(ErrorCode::BadSpec, "blobs need n, m >= 4K");
  }
  if (!(shift.scale > 0.0)) throw Error(ErrorCode::BadSpec, "shift scale must be positive");
  if (!(shift.label_noise >= 0.0 && shift.label_noise < 1.0)) {
    throw Error(ErrorCode::BadSpec, "label noise must lie in [0, 1)");
  }
  if (shift.translation.size() > dim) {
    throw Error(ErrorCode::BadSpec, "translation has more entries than feature dimensions");
  }

  RngStream center_rng(derive_seed(seed, kCenters));
  const double phase = 2.0 * std::numbers::pi * center_rng.uniform01();
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  for (std::size_t k = 0; k < classes; ++k) {
    const double angle =
        phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    centers[k][0] = kBlobRadius * std::cos(angle);
    centers[k][1] = kBlobRadius * std::sin(angle);
  }

  DomainDataset ds;
  ds.classes = classes;
  RngStream src_rng(derive_seed(seed, kSourceDraws));
  ds.source_x = draw_blobs(centers, n, ds.source_y, src_rng);

  RngStream tgt_rng(derive_seed(seed, kTargetDraws));
  std::vector<int> ty;
  ds.target_x = draw_blobs(centers, m, ty, tgt_rng);
  rotate_about(ds.target_x, shift.rotation_deg, 0.0, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double t = c < shift.translation.size() ? shift.translation[c] : 0.0;
      ds.target_x(i, c) = ds.target_x(i, c) * shift.scale + t;
    }
  }

  RngStream noise_rng(derive_seed(seed, kLabelNoise));
  for (auto& y : ty) {
    if (noise_rng.uniform01() < shift.label_noise) {
      // Uniform over the other K - 1 classes.
      const auto offset = 1 + noise_rng.below(classes - 1);
      y = static_cast<int>((static_cast<std::size_t>(y) + offset) % classes);
    }
  }
  ds.target_y = std::move(ty);
  return ds;
}

DomainDataset gen_moons(std::size_t n, std::size_t m, double rotation_deg, double noise_sd,
                        std::uint64_t seed) {
  if (n < 8 || m < 8) throw Error(ErrorCode::BadSpec, "moons need n, m >= 8");
  if (!(noise_sd >= 0.0)) throw Error(ErrorCode::BadSpec, "noise sd must be nonnegative");

  DomainDataset ds;
  ds.classes = 2;
  auto draw = [&](std::size_t rows, RngStream& rng, std::vector<int>& labels) {
    Matrix x(rows, 2);
    labels.resize(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      labels[i] = static_cast<int>(i % 2);
      draw_moon(rng, labels[i], noise_sd, x(i, 0), x(i, 1));
    }
    return x;
  };
  RngStream src_rng(derive_seed(seed, kSourceDraws));
  ds.source_x = draw(n, src_rng, ds.source_y);
  RngStream tgt_rng(derive_seed(seed, kTargetDraws));
  std::vector<int> ty;
  ds.target_x = draw(m, tgt_rng, ty);
  rotate_about(ds.target_x, rotation_deg, kMoonsCenterX, kMoonsCenterY);
  ds.target_y = std::move(ty);
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

double parse_feature(std::string_view tok, std::size_t line_no) {
  const std::string s(tok);
  if (s.empty()) parse_fail(line_no, "empty feature");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) parse_fail(line_no, "bad feature value '" + s + "'");
  if (!std::isfinite(v)) parse_fail(line_no, "non-finite feature value '" + s + "'");
  return v;
}

int parse_label(std::string_view tok, std::size_t line_no) {
  int v = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (tok.empty() || ec != std::errc() || ptr != last) {
    parse_fail(line_no, "bad label '" + std::string(tok) + "'");
  }
  if (v < -1) parse_fail(line_no, "label must be >= -1");
  return v;
}

}  // namespace

DomainDataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "line 1: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "domain" || header[1] != "label") {
    parse_fail(line_no, "header must be domain,label,f0,...");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t c = 0; c < d; ++c) {
    if (header[c + 2] != "f" + std::to_string(c)) {
      parse_fail(line_no, "expected column f" + std::to_string(c));
    }
  }

  std::vector<double> src, tgt;
  std::vector<int> src_y, tgt_y;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 2) {
      throw Error(ErrorCode::InconsistentWidth,
                  "line " + std::to_string(line_no) + ": expected " + std::to_string(d) +
                      " features, found " +
                      std::to_string(fields.size() < 2 ? 0 : fields.size() - 2));
    }
    const std::string_view tag = fields[0];
    const bool is_source = tag == "source";
    if (!is_source && tag != "target") {
      throw Error(ErrorCode::UnknownDomainTag,
                  "line " + std::to_string(line_no) + ": unknown domain '" + std::string(tag) +
                      "'");
    }
    const int label = parse_label(fields[1], line_no);
    if (is_source && label < 0) parse_fail(line_no, "source rows must be labeled");
    auto& dst = is_source ? src : tgt;
    for (std::size_t c = 0; c < d; ++c) dst.push_back(parse_feature(fields[c + 2], line_no));
    (is_source ? src_y : tgt_y).push_back(label);
  }

  DomainDataset ds;
  ds.source_x = Matrix(src_y.size(), d, std::move(src));
  ds.target_x = Matrix(tgt_y.size(), d, std::move(tgt));
  int max_label = 0;
  bool any_target_label = false;
  for (int y : src_y) max_label = std::max(max_label, y);
  for (int y : tgt_y) {
    max_label = std::max(max_label, y);
    any_target_label = any_target_label || y >= 0;
  }
  // A file whose labels are all 0 still describes a binary problem.
  ds.classes = std::max<std::size_t>(static_cast<std::size_t>(max_label) + 1, 2);
  ds.source_y = std::move(src_y);
  if (any_target_label) ds.target_y = std::move(tgt_y);
  ds.validate();
  return ds;
}

DomainDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string to_csv(const DomainDataset& ds) {
  std::string out = "domain,label";
  const std::size_t d = ds.feature_dim();
  for (std::size_t c = 0; c < d; ++c) out += ",f" + std::to_string(c);
  out += '\n';
  char buf[40];
  auto emit = [&](const char* tag, const Matrix& x, std::size_t i, int label) {
    out += tag;
    out += ',';
    out += std::to_string(label);
    for (std::size_t c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof buf, ",%.17g", x(i, c));
      out += buf;
    }
    out += '\n';
  };
  for (std::size_t i = 0; i < ds.source_count(); ++i) {
    emit("source", ds.source_x, i, ds.source_y[i]);
  }
  for (std::size_t i = 0; i < ds.target_count(); ++i) {
    emit("target", ds.target_x, i, ds.target_y ? (*ds.target_y)[i] : -1);
  }
  return out;
}

void save_csv(const DomainDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << to_csv(ds);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Batching

DomainMask Batch::mask() const {
  DomainMask m(source_idx.size(), Domain::Source);
  m.insert(m.end(), target_idx.size(), Domain::Target);
  return m;
}

BatchPlan::BatchPlan(std::size_t n, std::size_t m, std::size_t per_batch_source,
                     std::size_t per_batch_target, std::uint64_t seed)
    : n_(n), m_(m), per_source_(per_batch_source), per_target_(per_batch_target), seed_(seed) {}

std::size_t BatchPlan::batches_per_epoch() const noexcept {
  if (per_source_ == 0) return 0;
  return (n_ + per_source_ - 1) / per_source_;
}

namespace {

// `count` indices from back-to-back shuffles of [0, pool).
std::vector<std::size_t> draw_stream(std::size_t pool, std::size_t count, RngStream& rng) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto perm = rng.permutation(pool);
    const std::size_t take = std::min(pool, count - out.size());
    out.insert(out.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

}  // namespace

std::vector<Batch> BatchPlan::epoch(std::size_t e) const {
  const std::size_t nb = batches_per_epoch();
  RngStream src_rng(derive_seed(seed_, 2 * e));
  RngStream tgt_rng(derive_seed(seed_, 2 * e + 1));
  const auto src = draw_stream(n_, nb * per_source_, src_rng);
  const auto tgt = draw_stream(m_, nb * per_target_, tgt_rng);
  std::vector<Batch> batches(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    batches[b].source_idx.assign(src.begin() + static_cast<std::ptrdiff_t>(b * per_source_),
                                 src.begin() + static_cast<std::ptrdiff_t>((b + 1) * per_source_));
    batches[b].target_idx.assign(tgt.begin() + static_cast<std::ptrdiff_t>(b * per_target_),
                                 tgt.begin() + static_cast<std::ptrdiff_t>((b + 1) * per_target_));
  }
  return batches;
}

BatchPlan compose_batches(std::size_t n, std::size_t m, const BatchMode& mode,
                          std::uint64_t seed, std::size_t min_per_domain) {
  if (n == 0 || m == 0) {
    throw Error(ErrorCode::InsufficientDomainSamples, "both domains need at least one sample");
  }
  std::size_t ns = 0;
  std::size_t nt = 0;
  if (mode.kind == BatchMode::Kind::Proportional) {
    if (mode.batch_size < 4) throw Error(ErrorCode::BadSpec, "batch size must be >= 4");
    const std::size_t b = mode.batch_size;
    // round_half_up(b * n / (n + m)) in exact integer arithmetic.
    ns = (2 * b * n + (n + m)) / (2 * (n + m));
    nt = b - ns;
  } else {
    if (mode.n_source < 2 || mode.n_target < 2) {
      throw Error(ErrorCode::BadSpec, "fixed batches need at least 2 rows per domain");
    }
    ns = mode.n_source;
    nt = mode.n_target;
  }
  if (ns < min_per_domain || nt < min_per_domain) {
    throw Error(ErrorCode::InsufficientDomainSamples,
                "batch would hold " + std::to_string(ns) + " source and " + std::to_string(nt) +
                    " target rows; each domain needs at least " + std::to_string(min_per_domain));
  }
  return BatchPlan(n, m, ns, nt, seed);
}

}  // namespace dial
