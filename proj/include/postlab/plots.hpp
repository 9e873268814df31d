// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_PLOTS_HPP_
#define POSTLAB_PLOTS_HPP_

#include <string>
#include <utility>
#include <vector>

namespace postlab {

// Minimal deterministic SVG renderer: one polyline per series over shared
// axes, fixed canvas, %g tick labels, no timestamps or ids. Identical input
// produces identical bytes.
struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

// Walks `root` for stored training and sweep artifacts and renders them:
//   metrics.jsonl    -> plots/<key>.svg + plots/<key>.tsv per numeric key
//   sweep-eval.tsv   -> plots/sweep-pass_rate.svg (+ .tsv copy of the source)
// Returns the relative paths written, sorted. Re-running on the same tree
// rewrites identical bytes.
std::vector<std::string> emit_plots(const std::string& root);

}  // namespace postlab

#endif  // POSTLAB_PLOTS_HPP_
