// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <stdexcept>

#include "postlab/checkpoint.hpp"
#include "postlab/rng.hpp"

namespace postlab {

std::string_view merge_method_name(MergeMethod m) {
  switch (m) {
    case MergeMethod::kLinear: return "linear";
    case MergeMethod::kTies: return "ties";
    case MergeMethod::kSlerp: return "slerp";
  }
  throw std::logic_error("unknown merge method");
}

MergeMethod merge_method_from_name(std::string_view name) {
  if (name == "linear") return MergeMethod::kLinear;
  if (name == "ties") return MergeMethod::kTies;
  if (name == "slerp") return MergeMethod::kSlerp;
  throw std::invalid_argument("unknown merge method: " + std::string(name));
}

namespace {
void check_ratio(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("merge ratio must be in [0, 1]");
}
}  // namespace

ParameterSet linear_merge(const ParameterSet& a, const ParameterSet& b, double t) {
  check_ratio(t);
  a.check_same_structure(b);
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const float wa = static_cast<float>(1.0 - t);
  const float wb = static_cast<float>(t);
  ParameterSet out;
  for (size_t i = 0; i < a.size(); ++i) {
    auto& dst = out.add(a[i].name, a[i].shape);
    for (size_t j = 0; j < dst.data.size(); ++j) {
      dst.data[j] = wa * a[i].data[j] + wb * b[i].data[j];
    }
  }
  return out;
}

std::vector<int64_t> top_k_by_magnitude(const std::vector<float>& v, int64_t k) {
  const int64_t n = static_cast<int64_t>(v.size());
  k = std::min(k, n);
  std::vector<int64_t> idx(n);
  for (int64_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](int64_t x, int64_t y) {
    const float ax = std::fabs(v[x]);
    const float ay = std::fabs(v[y]);
    if (ax != ay) return ax > ay;
    return x < y;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ParameterSet ties_merge(const ParameterSet& base, const ParameterSet& a,
                        const ParameterSet& b, double t, double density) {
  check_ratio(t);
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument("density must be in (0, 1]");
  base.check_same_structure(a);
  base.check_same_structure(b);
  if (t == 0.0) return a;
  if (t == 1.0) return b;

  const double wa = 1.0 - t;
  const double wb = t;
  ParameterSet out;
  for (size_t ti = 0; ti < base.size(); ++ti) {
    const auto& tb_ = base[ti];
    const int64_t n = tb_.numel();
    std::vector<float> tau_a(n), tau_b(n);
    for (int64_t j = 0; j < n; ++j) {
      tau_a[j] = a[ti].data[j] - tb_.data[j];
      tau_b[j] = b[ti].data[j] - tb_.data[j];
    }
    const int64_t k = static_cast<int64_t>(
        std::ceil(density * static_cast<double>(n)));
    std::vector<float> trim_a(n, 0.0f), trim_b(n, 0.0f);
    for (int64_t j : top_k_by_magnitude(tau_a, k)) trim_a[j] = tau_a[j];
    for (int64_t j : top_k_by_magnitude(tau_b, k)) trim_b[j] = tau_b[j];

    auto& dst = out.add(tb_.name, tb_.shape);
    for (int64_t j = 0; j < n; ++j) {
      const double elect = wa * trim_a[j] + wb * trim_b[j];
      if (elect == 0.0) {
        dst.data[j] = tb_.data[j];
        continue;
      }
      const bool positive = elect > 0.0;
      double num = 0.0, den = 0.0;
      if (trim_a[j] != 0.0f && (trim_a[j] > 0.0f) == positive) {
        num += wa * trim_a[j];
        den += wa;
      }
      if (trim_b[j] != 0.0f && (trim_b[j] > 0.0f) == positive) {
        num += wb * trim_b[j];
        den += wb;
      }
      const double merged = den > 0.0 ? num / den : 0.0;
      dst.data[j] = tb_.data[j] + static_cast<float>(merged);
    }
  }
  return out;
}

ParameterSet slerp_merge(const ParameterSet& a, const ParameterSet& b, double t) {
  check_ratio(t);
  a.check_same_structure(b);
  if (t == 0.0) return a;
  if (t == 1.0) return b;

  ParameterSet out;
  for (size_t ti = 0; ti < a.size(); ++ti) {
    const auto& ta = a[ti];
    const auto& tb = b[ti];
    const int64_t n = ta.numel();
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double x = ta.data[j];
      const double y = tb.data[j];
      na += x * x;
      nb += y * y;
      dot += x * y;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    auto& dst = out.add(ta.name, ta.shape);
    double wa = 1.0 - t, wb = t;  // linear fallback weights
    if (na != 0.0 && nb != 0.0) {
      const double cosw = std::clamp(dot / (na * nb), -1.0, 1.0);
      const double omega = std::acos(cosw);
      const double so = std::sin(omega);
      if (std::fabs(so) >= 1e-6) {
        wa = std::sin((1.0 - t) * omega) / so;
        wb = std::sin(t * omega) / so;
      }
    }
    const float fa = static_cast<float>(wa);
    const float fb = static_cast<float>(wb);
    for (int64_t j = 0; j < n; ++j) {
      dst.data[j] = fa * ta.data[j] + fb * tb.data[j];
    }
  }
  return out;
}

uint64_t params_fingerprint(const ParameterSet& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const void* p, size_t len) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& t : params) {
    mix_bytes(t.name.data(), t.name.size());
    mix_bytes(t.shape.data(), t.shape.size() * sizeof(int64_t));
    mix_bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return h;
}

std::vector<SweepEntry> ratio_sweep(MergeMethod method, const PolicyConfig& config,
                                    const ParameterSet& a, const ParameterSet& b,
                                    const ParameterSet* base,
                                    const std::vector<double>& ratios, double density,
                                    const std::string& out_dir) {
  if (ratios.empty()) throw std::invalid_argument("ratio_sweep: no ratios");
  if (method == MergeMethod::kTies && base == nullptr)
    throw std::invalid_argument("ties merge needs a base parameter set");
  std::filesystem::create_directories(out_dir);

  char fp_a[32], fp_b[32];
  std::snprintf(fp_a, sizeof fp_a, "%016llx",
                static_cast<unsigned long long>(params_fingerprint(a)));
  std::snprintf(fp_b, sizeof fp_b, "%016llx",
                static_cast<unsigned long long>(params_fingerprint(b)));

  std::vector<SweepEntry> entries;
  for (double r : ratios) {
    ParameterSet merged;
    switch (method) {
      case MergeMethod::kLinear: merged = linear_merge(a, b, r); break;
      case MergeMethod::kTies: merged = ties_merge(*base, a, b, r, density); break;
      case MergeMethod::kSlerp: merged = slerp_merge(a, b, r); break;
    }
    nlohmann::json recipe{{"method", merge_method_name(method)},
                          {"ratio", r},
                          {"parent_a", fp_a},
                          {"parent_b", fp_b}};
    if (method == MergeMethod::kTies) recipe["density"] = density;
    char name[64];
    std::snprintf(name, sizeof name, "merge-%s-%.2f.ckpt",
                  std::string(merge_method_name(method)).c_str(), r);
    const std::string path = out_dir + "/" + name;
    save_checkpoint(path, config, merged, {{"merge", recipe}});
    entries.push_back({r, path});
  }
  return entries;
}

}  // namespace postlab
