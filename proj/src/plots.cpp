// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace postlab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string g10(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string px(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << bytes;
}

}  // namespace

std::string svg_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 400;
  constexpr double kLeft = 64, kRight = 16, kTop = 28, kBottom = 44;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  if (xmax - xmin <= 0) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin <= 0) {
    double pad = std::max(0.5, std::fabs(ymax) * 0.1);
    ymin -= pad;
    ymax += pad;
  }
  auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">" + title + "</text>\n";

  // gridlines and tick labels, five per axis
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4.0;
    double yv = ymin + (ymax - ymin) * i / 4.0;
    std::string xp = px(sx(xv)), yp = px(sy(yv));
    out += "<line x1=\"" + xp + "\" y1=\"" + px(kTop) + "\" x2=\"" + xp + "\" y2=\"" +
           px(kTop + ph) + "\" stroke=\"#dddddd\"/>\n";
    out += "<line x1=\"" + px(kLeft) + "\" y1=\"" + yp + "\" x2=\"" + px(kLeft + pw) +
           "\" y2=\"" + yp + "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + xp + "\" y=\"" + px(kTop + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           g(xv) + "</text>\n";
    out += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + yp +
           "\" text-anchor=\"end\" dominant-baseline=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"11\">" + g(yv) + "</text>\n";
  }
  out += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(pw) +
         "\" height=\"" + px(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
    std::string pts;
    for (auto [x, y] : series[si].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      pts += px(sx(x)) + "," + px(sy(y)) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    if (series.size() > 1 || !series[si].label.empty()) {
      double ly = kTop + 14 + 14 * static_cast<double>(si);
      out += "<line x1=\"" + px(kLeft + pw - 86) + "\" y1=\"" + px(ly) + "\" x2=\"" +
             px(kLeft + pw - 66) + "\" y2=\"" + px(ly) + "\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
      out += "<text x=\"" + px(kLeft + pw - 62) + "\" y=\"" + px(ly) +
             "\" dominant-baseline=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">" + series[si].label + "</text>\n";
    }
  }

  out += "<text x=\"" + px(kLeft + pw / 2) + "\" y=\"" + px(kH - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         x_label + "</text>\n";
  out += "<text x=\"14\" y=\"" + px(kTop + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 14 " + px(kTop + ph / 2) + ")\">" + y_label +
         "</text>\n";
  out += "</svg>\n";
  return out;
}

namespace {

std::vector<std::string> plot_metrics_file(const fs::path& file, const fs::path& root) {
  std::ifstream in(file);
  std::string line;
  // series per numeric key; x is the record's own step counter when present
  std::map<std::string, std::vector<std::pair<double, double>>> by_key;
  int64_t index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    double x = static_cast<double>(index++);
    if (j.contains("step") && j["step"].is_number()) x = j["step"].get<double>();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "step" || it.key() == "epoch") continue;
      if (!it.value().is_number()) continue;
      by_key[it.key()].emplace_back(x, it.value().get<double>());
    }
  }

  std::vector<std::string> written;
  if (by_key.empty()) return written;
  fs::path plot_dir = file.parent_path() / "plots";
  fs::create_directories(plot_dir);
  for (const auto& [key, pts] : by_key) {
    if (pts.size() < 2) continue;
    Series s{"", pts};
    write_file((plot_dir / (key + ".svg")).string(), svg_chart(key, "step", key, {s}));
    std::string tsv = "step\t" + key + "\n";
    for (auto [x, y] : pts) tsv += g(x) + "\t" + g10(y) + "\n";
    write_file((plot_dir / (key + ".tsv")).string(), tsv);
    written.push_back(fs::relative(plot_dir / (key + ".svg"), root).generic_string());
    written.push_back(fs::relative(plot_dir / (key + ".tsv"), root).generic_string());
  }
  return written;
}

std::vector<std::string> plot_sweep_file(const fs::path& file, const fs::path& root) {
  std::ifstream in(file);
  std::string line;
  if (!std::getline(in, line)) return {};  // header
  std::map<std::string, Series> pass, reward;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string method, ratio_s, pass_s, reward_s;
    if (!std::getline(row, method, '\t') || !std::getline(row, ratio_s, '\t') ||
        !std::getline(row, pass_s, '\t') || !std::getline(row, reward_s, '\t'))
      continue;
    double ratio = std::strtod(ratio_s.c_str(), nullptr);
    if (!pass.count(method)) {
      order.push_back(method);
      pass[method].label = method;
      reward[method].label = method;
    }
    pass[method].points.emplace_back(ratio, std::strtod(pass_s.c_str(), nullptr));
    reward[method].points.emplace_back(ratio, std::strtod(reward_s.c_str(), nullptr));
  }
  if (order.empty()) return {};

  fs::path plot_dir = file.parent_path() / "plots";
  fs::create_directories(plot_dir);
  std::vector<Series> pass_series, reward_series;
  for (const std::string& m : order) {
    pass_series.push_back(pass[m]);
    reward_series.push_back(reward[m]);
  }
  std::vector<std::string> written;
  write_file((plot_dir / "sweep-pass_rate.svg").string(),
             svg_chart("merge sweep", "ratio", "pass_rate", pass_series));
  written.push_back(fs::relative(plot_dir / "sweep-pass_rate.svg", root).generic_string());
  write_file((plot_dir / "sweep-mean_reward.svg").string(),
             svg_chart("merge sweep", "ratio", "mean_reward", reward_series));
  written.push_back(fs::relative(plot_dir / "sweep-mean_reward.svg", root).generic_string());
  return written;
}

}  // namespace

std::vector<std::string> emit_plots(const std::string& root) {
  fs::path rp(root);
  if (!fs::exists(rp)) throw std::runtime_error("plots: no such directory: " + root);
  std::vector<fs::path> metrics_files, sweep_files;
  if (fs::is_regular_file(rp)) {
    if (rp.filename() == "metrics.jsonl") metrics_files.push_back(rp);
    if (rp.filename() == "sweep-eval.tsv") sweep_files.push_back(rp);
    rp = rp.parent_path();
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(rp)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename() == "metrics.jsonl") metrics_files.push_back(entry.path());
      if (entry.path().filename() == "sweep-eval.tsv") sweep_files.push_back(entry.path());
    }
  }
  auto by_name = [](const fs::path& a, const fs::path& b) { return a.string() < b.string(); };
  std::sort(metrics_files.begin(), metrics_files.end(), by_name);
  std::sort(sweep_files.begin(), sweep_files.end(), by_name);

  std::vector<std::string> written;
  for (const fs::path& f : metrics_files) {
    std::vector<std::string> w = plot_metrics_file(f, rp);
    written.insert(written.end(), w.begin(), w.end());
  }
  for (const fs::path& f : sweep_files) {
    std::vector<std::string> w = plot_sweep_file(f, rp);
    written.insert(written.end(), w.begin(), w.end());
  }
  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace postlab
