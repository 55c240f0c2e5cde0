#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/text_io.hpp"

namespace sigsurv {

/// Linear map v -> components * (v - mean), rows are the leading principal
/// directions of the training embeddings.
struct CompressionMap {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> mean;                ///< input_dim
  std::vector<double> components;          ///< output_dim x input_dim, row-major
  std::vector<double> explained_variance;  ///< output_dim, non-increasing
  /// Divide each coordinate by the square root of its explained variance.
  bool scale_output = false;

  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(components).subspan(k * input_dim, input_dim);
  }

  friend bool operator==(const CompressionMap&, const CompressionMap&) = default;
};

/// PCA on the centered sample covariance (denominator n - 1). Each component
/// row is signed so that its largest-magnitude entry is positive.
inline CompressionMap fit_pca(std::span<const std::vector<double>> samples, std::size_t p_bar,
                              bool scale_output = false) {
  if (samples.empty()) throw DegenerateInputError("fit_pca: no training vectors");
  const std::size_t p = samples.front().size();
  if (p_bar == 0 || p_bar > p) {
    throw Error("fit_pca: p_bar=" + std::to_string(p_bar) + " must lie in [1, " + std::to_string(p) + "]");
  }
  if (samples.size() < p_bar + 1) {
    throw DegenerateInputError("fit_pca: insufficient samples (" + std::to_string(samples.size()) + ") for p_bar=" +
                               std::to_string(p_bar));
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto pi = static_cast<Eigen::Index>(p);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(pi);
  for (const auto& s : samples) {
    if (s.size() != p) throw DimensionError("fit_pca: inconsistent embedding dimensions");
    mean += Eigen::Map<const Eigen::VectorXd>(s.data(), pi);
  }
  mean /= static_cast<double>(n);
  Eigen::MatrixXd centered(n, pi);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.row(i) = Eigen::Map<const Eigen::VectorXd>(samples[static_cast<std::size_t>(i)].data(), pi) - mean;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(pi, pi);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
  cov = cov.selfadjointView<Eigen::Lower>();
  if (!(cov.trace() > 0.0)) throw DegenerateInputError("fit_pca: training embeddings have zero variance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("fit_pca: eigendecomposition failed");

  CompressionMap map;
  map.input_dim = p;
  map.output_dim = p_bar;
  map.scale_output = scale_output;
  map.mean.assign(mean.data(), mean.data() + pi);
  map.components.resize(p_bar * p);
  map.explained_variance.resize(p_bar);
  for (std::size_t k = 0; k < p_bar; ++k) {
    const Eigen::Index col = pi - 1 - static_cast<Eigen::Index>(k);  // eigenvalues ascend
    Eigen::VectorXd u = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0.0) u = -u;
    std::copy(u.data(), u.data() + pi, map.components.begin() + static_cast<std::ptrdiff_t>(k * p));
    map.explained_variance[k] = std::max(0.0, eig.eigenvalues()(col));
  }
  return map;
}

/// Collects every report embedding of `train`.
inline std::vector<std::vector<double>> report_embeddings(const Cohort& cohort) {
  std::vector<std::vector<double>> out;
  out.reserve(cohort.n_reports());
  for (const auto& p : cohort.patients) {
    for (const auto& r : p.reports) out.push_back(r.embedding);
  }
  return out;
}

inline CompressionMap fit_pca(const Cohort& train, std::size_t p_bar, bool scale_output = false) {
  if (train.mode != InputMode::vector) throw Error("fit_pca: cohort is not in vector mode");
  const auto samples = report_embeddings(train);
  return fit_pca(std::span<const std::vector<double>>(samples), p_bar, scale_output);
}

inline std::vector<double> project(const CompressionMap& map, std::span<const double> v) {
  if (v.size() != map.input_dim) {
    throw DimensionError("project: expected dimension " + std::to_string(map.input_dim) + ", got " +
                         std::to_string(v.size()));
  }
  std::vector<double> out(map.output_dim, 0.0);
  for (std::size_t k = 0; k < map.output_dim; ++k) {
    const auto r = map.row(k);
    double acc = 0.0;
    for (std::size_t j = 0; j < map.input_dim; ++j) acc += r[j] * (v[j] - map.mean[j]);
    if (map.scale_output && map.explained_variance[k] > 0.0) acc /= std::sqrt(map.explained_variance[k]);
    out[k] = acc;
  }
  return out;
}

inline Cohort project_cohort(const CompressionMap& map, const Cohort& cohort) {
  if (cohort.mode != InputMode::vector) throw Error("project_cohort: cohort is not in vector mode");
  if (cohort.embedding_dim != map.input_dim) {
    throw DimensionError("project_cohort: cohort has p=" + std::to_string(cohort.embedding_dim) +
                         ", map expects p=" + std::to_string(map.input_dim));
  }
  Cohort out;
  out.mode = InputMode::vector;
  out.embedding_dim = map.output_dim;
  out.patients.reserve(cohort.size());
  for (const auto& p : cohort.patients) {
    PatientRecord rec{p.outcome, {}};
    rec.reports.reserve(p.reports.size());
    for (const auto& r : p.reports) rec.reports.push_back({r.t, project(map, r.embedding), {}});
    out.patients.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

inline std::string compression_body(const CompressionMap& map) {
  auto line = [](std::string tag, std::span<const double> xs) {
    for (double x : xs) tag += " " + text::format_double(x);
    return tag + "\n";
  };
  std::string body = line("mean", map.mean) + line("variance", map.explained_variance);
  for (std::size_t k = 0; k < map.output_dim; ++k) body += line("component", map.row(k));
  return body;
}

}  // namespace detail

/// Text model file:
///
///   sigsurv-compression v1
///   p <p>
///   p_bar <p_bar>
///   scale <0|1>
///   checksum <sha256 of the remaining lines>
///   mean ..., variance ..., component ... (p_bar rows)
inline std::string serialize(const CompressionMap& map) {
  const std::string body = detail::compression_body(map);
  return "sigsurv-compression v1\np " + std::to_string(map.input_dim) + "\np_bar " + std::to_string(map.output_dim) +
         "\nscale " + (map.scale_output ? "1" : "0") + "\nchecksum " + text::sha256_hex(body) + "\n" + body;
}

inline void save_compression_map(const CompressionMap& map, const std::string& path) {
  text::write_file(path, serialize(map));
}

inline CompressionMap load_compression_map(const std::string& path) {
  const std::string content = text::read_file(path);
  text::LineReader reader(content);
  std::string_view line;
  auto expect = [&](std::string_view tag) -> std::string_view {
    if (!reader.next(line)) throw ParseError(path, reader.line_number() + 1, "unexpected end of file");
    if (!line.starts_with(tag)) throw ParseError(path, reader.line_number(), "expected '" + std::string(tag) + "'");
    return text::trim(line.substr(tag.size()));
  };
  if (expect("sigsurv-compression") != "v1") throw ParseError(path, 1, "unsupported compression map version");
  CompressionMap map;
  int scale = 0;
  if (!text::parse_int(expect("p "), map.input_dim)) throw ParseError(path, 2, "bad p");
  if (!text::parse_int(expect("p_bar "), map.output_dim)) throw ParseError(path, 3, "bad p_bar");
  if (!text::parse_int(expect("scale "), scale)) throw ParseError(path, 4, "bad scale flag");
  map.scale_output = scale != 0;
  const std::string checksum(expect("checksum "));
  const auto body_start = content.find('\n', content.find("checksum ")) + 1;
  if (text::sha256_hex(std::string_view(content).substr(body_start)) != checksum) {
    throw Error(path + ": checksum mismatch");
  }
  auto values = [&](std::string_view tag, std::size_t n, std::vector<double>& out) {
    const auto f = text::split(expect(tag), ' ');
    if (f.size() != n) throw ParseError(path, reader.line_number(), "expected " + std::to_string(n) + " values");
    for (auto s : f) {
      double x = 0.0;
      if (!text::parse_double(s, x)) throw ParseError(path, reader.line_number(), "value is not a number");
      out.push_back(x);
    }
  };
  values("mean ", map.input_dim, map.mean);
  values("variance ", map.output_dim, map.explained_variance);
  for (std::size_t k = 0; k < map.output_dim; ++k) values("component ", map.input_dim, map.components);
  return map;
}

}  // namespace sigsurv
