// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_METRICS_HPP_
#define POSTLAB_METRICS_HPP_

#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace postlab {

// Append-only JSON-lines sink for per-step training telemetry. A default
// constructed writer swallows records, which keeps call sites unconditional.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  explicit MetricsWriter(const std::string& path)
      : out_(path, std::ios::trunc), enabled_(true) {
    if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
  }

  void write(const nlohmann::json& j) {
    if (!enabled_) return;
    out_ << j.dump() << "\n";
    out_.flush();
  }

  bool enabled() const { return enabled_; }

 private:
  std::ofstream out_;
  bool enabled_ = false;
};

}  // namespace postlab

#endif  // POSTLAB_METRICS_HPP_
