#include "usl/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "usl/errors.hpp"

namespace usl {

namespace {

std::string located(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return path.string() + ":" + std::to_string(line) + ": " + what;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw data_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  return out;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

Clustering labels_from_one_based(const std::vector<long long>& ids, const std::filesystem::path& path) {
  std::vector<int> zero(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 1) throw data_error(path.string() + ": label " + std::to_string(ids[i]) + " is not a positive 1-based id");
    zero[i] = static_cast<int>(ids[i] - 1);
  }
  try {
    return Clustering::from_labels(std::move(zero));
  } catch (const data_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

template <typename T>
T swap_bytes(T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <typename T>
void put_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw data_error(path.string() + ": truncated feature tensor");
  if constexpr (std::endian::native == std::endian::big) value = swap_bytes(value);
  return value;
}

constexpr char kMagic[4] = {'U', 'S', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

FeatureTensord load_features_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw data_error(path.string() + ": not a USLF feature tensor");
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kVersion) throw data_error(path.string() + ": unsupported USLF version " + std::to_string(version));
  const Index n = get_le<std::uint32_t>(in, path);
  const Index F = get_le<std::uint32_t>(in, path);
  std::vector<Eigen::MatrixXd> slices(static_cast<std::size_t>(F), Eigen::MatrixXd(n, n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index f = 0; f < F; ++f) slices[static_cast<std::size_t>(f)](i, j) = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
  if (in.peek() != std::char_traits<char>::eof()) throw data_error(path.string() + ": trailing bytes after feature tensor");
  try {
    return FeatureTensord(std::move(slices));
  } catch (const data_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

FeatureTensord load_features_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  Index n = -1, F = -1;
  std::vector<Eigen::MatrixXd> slices;
  std::vector<char> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split(body, ',');
    if (n < 0) {
      long long a = 0, b = 0;
      if (fields.size() != 2 || !parse_int(fields[0], a) || !parse_int(fields[1], b) || a < 1 || b < 0)
        throw data_error(located(path, lineno, "expected header \"n,F\""));
      n = a;
      F = b;
      slices.assign(static_cast<std::size_t>(F), Eigen::MatrixXd::Zero(n, n));
      seen.assign(static_cast<std::size_t>(n * n), 0);
      continue;
    }
    if (fields.size() != static_cast<std::size_t>(F + 2))
      throw data_error(located(path, lineno, "expected " + std::to_string(F + 2) + " fields, found " + std::to_string(fields.size())));
    long long i = 0, j = 0;
    if (!parse_int(fields[0], i) || !parse_int(fields[1], j) || i < 1 || j < 1 || i > n || j > n || i >= j)
      throw data_error(located(path, lineno, "pair indices must satisfy 1 <= i < j <= n"));
    const Index a = i - 1, b = j - 1;
    if (seen[static_cast<std::size_t>(a * n + b)]) throw data_error(located(path, lineno, "duplicate pair"));
    seen[static_cast<std::size_t>(a * n + b)] = 1;
    for (Index f = 0; f < F; ++f) {
      double v = 0;
      if (!parse_double(fields[static_cast<std::size_t>(f + 2)], v)) throw data_error(located(path, lineno, "non-numeric feature value"));
      slices[static_cast<std::size_t>(f)](a, b) = slices[static_cast<std::size_t>(f)](b, a) = v;
    }
  }
  if (n < 0) throw data_error(path.string() + ": empty feature file");
  for (Index a = 0; a < n; ++a)
    for (Index b = a + 1; b < n; ++b)
      if (!seen[static_cast<std::size_t>(a * n + b)])
        throw data_error(path.string() + ": missing pair " + std::to_string(a + 1) + "," + std::to_string(b + 1));
  try {
    return FeatureTensord(std::move(slices));
  } catch (const data_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

}  // namespace

GaussianSpec GaussianSpec::defaults(std::vector<int> counts, int noisy_dims, double noise_scale) {
  GaussianSpec spec;
  const std::size_t K = counts.size();
  std::size_t cols = 1;
  while (cols * cols < K) ++cols;
  const std::array<double, 4> sds{0.5, 0.8, 1.0, 0.6};
  for (std::size_t k = 0; k < K; ++k) {
    spec.means.emplace_back(6.0 * static_cast<double>(k % cols), 6.0 * static_cast<double>(k / cols));
    spec.deviations.push_back(sds[k % sds.size()]);
  }
  spec.counts = std::move(counts);
  spec.noisy_dims = noisy_dims;
  spec.noise_scale = noise_scale;
  return spec;
}

void GaussianSpec::validate() const {
  if (counts.empty()) throw data_error("Gaussian spec needs at least one component");
  if (means.size() != counts.size() || deviations.size() != counts.size())
    throw data_error("Gaussian spec has " + std::to_string(counts.size()) + " counts but " + std::to_string(means.size()) +
                     " means and " + std::to_string(deviations.size()) + " deviations");
  for (int c : counts)
    if (c < 1) throw data_error("Gaussian component counts must be >= 1");
  for (double s : deviations)
    if (!(s > 0)) throw data_error("Gaussian deviations must be > 0");
  if (noisy_dims < 0) throw data_error("noisy dimension count must be >= 0");
  if (noisy_dims > 0 && !(noise_scale > 0)) throw data_error("noise scale must be > 0");
}

PointSet gen_gaussians(const GaussianSpec& spec, std::uint64_t seed) {
  spec.validate();
  Index n = 0;
  for (int c : spec.counts) n += c;
  const Index d = 2 + spec.noisy_dims;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PointSet p;
  p.coords.resize(n, d);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (std::size_t k = 0; k < spec.counts.size(); ++k) {
    for (int r = 0; r < spec.counts[k]; ++r, ++row) {
      for (Index j = 0; j < 2; ++j) p.coords(row, j) = spec.means[k][j] + spec.deviations[k] * normal(rng);
      for (Index j = 2; j < d; ++j) p.coords(row, j) = spec.noise_scale * normal(rng);
      labels.push_back(static_cast<int>(k));
    }
  }
  p.labels = Clustering(std::move(labels), static_cast<int>(spec.counts.size()));
  return p;
}

FeatureTensord pairwise_features(const Eigen::MatrixXd& coords) {
  if (!coords.allFinite()) throw data_error("point coordinates must be finite");
  const Index n = coords.rows();
  std::vector<Eigen::MatrixXd> slices;
  slices.reserve(static_cast<std::size_t>(coords.cols()));
  for (Index f = 0; f < coords.cols(); ++f) {
    const Eigen::VectorXd c = coords.col(f);
    Eigen::MatrixXd x(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) x(i, j) = std::abs(c[i] - c[j]);
    slices.push_back(std::move(x));
  }
  return FeatureTensord(std::move(slices));
}

Eigen::MatrixXd minmax_scale(const Eigen::MatrixXd& coords) {
  Eigen::MatrixXd out(coords.rows(), coords.cols());
  for (Index f = 0; f < coords.cols(); ++f) {
    if (coords.rows() == 0) break;
    const double lo = coords.col(f).minCoeff();
    const double range = coords.col(f).maxCoeff() - lo;
    if (range > 0)
      out.col(f) = (coords.col(f).array() - lo) / range;
    else
      out.col(f).setZero();
  }
  return out;
}

PointSet load_points_csv(const std::filesystem::path& path, bool with_labels) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::vector<double>> rows;
  std::vector<long long> ids;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    if (width == 0) {
      width = fields.size();
      if (with_labels && width < 2) throw data_error(located(path, lineno, "a labeled row needs at least one coordinate"));
    } else if (fields.size() != width) {
      throw data_error(located(path, lineno, "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size())));
    }
    const std::size_t dims = with_labels ? width - 1 : width;
    std::vector<double> row(dims);
    for (std::size_t k = 0; k < dims; ++k)
      if (!parse_double(fields[k], row[k])) throw data_error(located(path, lineno, "non-numeric value in column " + std::to_string(k + 1)));
    if (with_labels) {
      long long id = 0;
      if (!parse_int(fields.back(), id)) throw data_error(located(path, lineno, "label is not an integer"));
      ids.push_back(id);
    }
    rows.push_back(std::move(row));
  }
  PointSet p;
  const std::size_t dims = rows.empty() ? 0 : rows.front().size();
  p.coords.resize(static_cast<Index>(rows.size()), static_cast<Index>(dims));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < dims; ++k) p.coords(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  if (with_labels) p.labels = labels_from_one_based(ids, path);
  return p;
}

void save_points_csv(const std::filesystem::path& path, const PointSet& points) {
  auto out = open_out(path);
  for (Index i = 0; i < points.size(); ++i) {
    for (Index k = 0; k < points.dims(); ++k) {
      if (k) out << ',';
      out << format_double(points.coords(i, k));
    }
    if (points.labels) out << ',' << (*points.labels)[static_cast<std::size_t>(i)] + 1;
    out << '\n';
  }
  if (!out) throw data_error("failed writing " + path.string());
}

Clustering load_labels(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<long long> ids;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    long long id = 0;
    if (!parse_int(body, id)) throw data_error(located(path, lineno, "label is not an integer"));
    ids.push_back(id);
  }
  return labels_from_one_based(ids, path);
}

void save_labels(const std::filesystem::path& path, const Clustering& labels) {
  auto out = open_out(path);
  for (int c : labels.labels()) out << c + 1 << '\n';
  if (!out) throw data_error("failed writing " + path.string());
}

FeatureTensord load_features(const std::filesystem::path& path) {
  char magic[4] = {};
  {
    auto in = open_in(path, std::ios::binary);
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) return load_features_binary(path);
  }
  return load_features_text(path);
}

void save_features(const std::filesystem::path& path, const FeatureTensord& x) {
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.points()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.features()));
  for (Index i = 0; i < x.points(); ++i)
    for (Index j = 0; j < x.points(); ++j)
      for (Index f = 0; f < x.features(); ++f) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x(i, j, f)));
  if (!out) throw data_error("failed writing " + path.string());
}

PointSet load_dermatology(const std::filesystem::path& path) {
  constexpr std::size_t kAttributes = 34;
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::array<double, kAttributes>> rows;
  std::vector<long long> ids;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto fields = split(body, ',');
    if (fields.size() != kAttributes + 1)
      throw data_error(located(path, lineno, "expected 35 fields (34 attributes and the class), found " + std::to_string(fields.size())));
    if (std::find(fields.begin(), fields.end(), std::string_view("?")) != fields.end()) continue;
    std::array<double, kAttributes> row{};
    for (std::size_t k = 0; k < kAttributes; ++k)
      if (!parse_double(fields[k], row[k])) throw data_error(located(path, lineno, "non-numeric value in column " + std::to_string(k + 1)));
    long long id = 0;
    if (!parse_int(fields.back(), id)) throw data_error(located(path, lineno, "class is not an integer"));
    rows.push_back(row);
    ids.push_back(id);
  }
  Eigen::MatrixXd raw(static_cast<Index>(rows.size()), static_cast<Index>(kAttributes));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < kAttributes; ++k) raw(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  PointSet p;
  p.coords = minmax_scale(raw);
  p.labels = labels_from_one_based(ids, path);
  return p;
}

}  // namespace usl
