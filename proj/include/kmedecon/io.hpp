#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmedecon/common.hpp"
#include "kmedecon/dme.hpp"
#include "kmedecon/kernels.hpp"

namespace kmedecon {

using Json = nlohmann::json;

// Shortest exact decimal representation; keeps CSV output byte-stable.
inline std::string format_double(double v) {
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v && (best.empty() || std::strlen(buf) < best.size())) {
      best = buf;
    }
  }
  return best;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

inline void write_text(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << content;
}

// CSV with a header row; every cell is a double.
inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const Matrix& rows) {
  if (rows.size() > 0 && rows.cols() != static_cast<Eigen::Index>(header.size())) {
    throw DimensionError("write_csv: header width mismatch");
  }
  std::string out;
  for (size_t c = 0; c < header.size(); ++c) {
    if (c > 0) out += ',';
    out += header[c];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(rows(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// --- strict JSON schema helpers ---------------------------------------------

inline Json load_json_file(const std::filesystem::path& path) {
  Json j = Json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("invalid JSON in " + path.string());
  }
  return j;
}

inline void check_keys(const Json& j, const std::vector<std::string>& allowed,
                       const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto& a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(ctx + ": unknown field \"" + item.key() + "\"");
  }
}

inline const Json& require_key(const Json& j, const std::string& key,
                               const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(ctx + ": missing field \"" + key + "\"");
  return *it;
}

inline double get_double(const Json& j, const std::string& key,
                         const std::string& ctx) {
  const Json& v = require_key(j, key, ctx);
  if (!v.is_number()) throw ConfigError(ctx + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

inline double get_double_or(const Json& j, const std::string& key, double dflt,
                            const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number()) throw ConfigError(ctx + ": \"" + key + "\" must be a number");
  return it->get<double>();
}

inline long get_int(const Json& j, const std::string& key,
                    const std::string& ctx) {
  const Json& v = require_key(j, key, ctx);
  if (!v.is_number_integer()) {
    throw ConfigError(ctx + ": \"" + key + "\" must be an integer");
  }
  return v.get<long>();
}

inline long get_int_or(const Json& j, const std::string& key, long dflt,
                       const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_number_integer()) {
    throw ConfigError(ctx + ": \"" + key + "\" must be an integer");
  }
  return it->get<long>();
}

inline bool get_bool_or(const Json& j, const std::string& key, bool dflt,
                        const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return dflt;
  if (!it->is_boolean()) {
    throw ConfigError(ctx + ": \"" + key + "\" must be a boolean");
  }
  return it->get<bool>();
}

inline std::string get_string(const Json& j, const std::string& key,
                              const std::string& ctx) {
  const Json& v = require_key(j, key, ctx);
  if (!v.is_string()) throw ConfigError(ctx + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

// --- kernel (de)serialization -----------------------------------------------

inline Json kernel_to_json(const KernelSpec& spec) {
  Json j;
  j["family"] = to_string(spec.family);
  j["lengthscales"] = std::vector<double>(
      spec.lengthscales.data(), spec.lengthscales.data() + spec.lengthscales.size());
  j["signal_variance"] = spec.signal_variance;
  if (spec.family == KernelFamily::Polynomial) j["degree"] = spec.degree;
  return j;
}

inline KernelSpec kernel_from_json(const Json& j, const std::string& ctx) {
  check_keys(j, {"family", "lengthscales", "signal_variance", "degree"}, ctx);
  KernelSpec spec;
  spec.family = kernel_family_from_string(get_string(j, "family", ctx));
  if (auto it = j.find("lengthscales"); it != j.end()) {
    if (!it->is_array() || it->empty()) {
      throw ConfigError(ctx + ": \"lengthscales\" must be a non-empty array");
    }
    spec.lengthscales.resize(static_cast<Eigen::Index>(it->size()));
    Eigen::Index i = 0;
    for (const auto& v : *it) {
      if (!v.is_number()) {
        throw ConfigError(ctx + ": lengthscales entries must be numbers");
      }
      spec.lengthscales(i++) = v.get<double>();
    }
  }
  spec.signal_variance = get_double_or(j, "signal_variance", 1.0, ctx);
  spec.degree = static_cast<int>(get_int_or(j, "degree", 2, ctx));
  spec.validate();
  return spec;
}

// --- model export -------------------------------------------------------

inline Json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Json points_to_json(const Points& p) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < p.cols(); ++j) row.push_back(p(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Json dme_model_to_json(const DmeModel& model) {
  Json j;
  j["anchors_x"] = points_to_json(model.anchors_x());
  j["alpha"] = vector_to_json(model.alpha());
  j["kernel_k"] = kernel_to_json(model.kernel_k());
  j["kernel_l"] = kernel_to_json(model.kernel_l());
  j["lambda"] = model.lambda();
  j["epsilon"] = model.epsilon();
  j["form"] = model.form() == DmeForm::Woodbury ? "woodbury" : "standard";
  return j;
}

}  // namespace kmedecon
