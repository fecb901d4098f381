// src/metrics.cpp
//
// Copyright 2026 The sq2s Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sq2s/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "sq2s/common.hpp"

namespace sq2s {

namespace {

void check_same_grid(const char* op, const MelSpec& a, const MelSpec& b) {
  if (a.n_mels != b.n_mels || a.width != b.width) {
    throw std::invalid_argument(std::string(op) + ": grids " +
                                std::to_string(a.n_mels) + "x" +
                                std::to_string(a.width) + " vs " +
                                std::to_string(b.n_mels) + "x" +
                                std::to_string(b.width));
  }
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double corr2d(const MelSpec& a, const MelSpec& b) {
  check_same_grid("corr2d", a, b);
  const std::size_t n = a.values.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw std::invalid_argument("corr2d: correlation undefined for a constant input");
  }
  return sab / std::sqrt(saa * sbb);
}

double log_spectral_distance(const MelSpec& a, const MelSpec& b) {
  check_same_grid("log_spectral_distance", a, b);
  const double range_a = a.meta.db_ceil - a.meta.db_floor;
  const double range_b = b.meta.db_ceil - b.meta.db_floor;
  double frame_sq_sum = 0;
  for (int t = 0; t < a.width; ++t) {
    double band_sq = 0;
    for (int m = 0; m < a.n_mels; ++m) {
      const double db_a = a.at(m, t) * range_a + a.meta.db_floor;
      const double db_b = b.at(m, t) * range_b + b.meta.db_floor;
      band_sq += (db_a - db_b) * (db_a - db_b);
    }
    frame_sq_sum += band_sq / a.n_mels;  // per-frame mean square dB error
  }
  return std::sqrt(frame_sq_sum / a.width);
}

// --- reports --------------------------------------------------------------------

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream f(path);
  if (!f) throw UsageError("eval csv: cannot write " + path);
  f << "ablation,trial,subject,class,corr2d,lsd_db\n";
  f << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.ablation << "," << r.trial << "," << r.subject << "," << r.class_id
      << "," << r.corr << "," << r.lsd << "\n";
  }
}

std::vector<EvalRow> read_eval_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("eval csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "ablation,trial,subject,class,corr2d,lsd_db") {
    throw UsageError("eval csv: bad header in " + path);
  }
  std::vector<EvalRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    EvalRow r;
    std::string tok;
    auto next = [&]() {
      if (!std::getline(is, tok, ',')) throw UsageError("eval csv: bad row '" + line + "'");
      return tok;
    };
    r.ablation = next();
    r.trial = std::stoi(next());
    r.subject = std::stoi(next());
    r.class_id = std::stoi(next());
    r.corr = std::stod(next());
    r.lsd = std::stod(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<AblationSummary> summarize_ablations(
    const std::vector<std::string>& labels,
    const std::map<std::string, std::vector<double>>& corr_by_label,
    const std::map<std::string, std::vector<double>>& lsd_by_label) {
  std::vector<AblationSummary> out;
  for (const std::string& label : labels) {
    AblationSummary s;
    s.label = label;
    auto ci = corr_by_label.find(label);
    auto li = lsd_by_label.find(label);
    if (ci == corr_by_label.end() || ci->second.empty()) {
      s.present = false;
      out.push_back(s);
      continue;
    }
    s.present = true;
    s.trials = static_cast<int>(ci->second.size());
    double cm = 0;
    for (double v : ci->second) cm += v;
    cm /= static_cast<double>(ci->second.size());
    s.corr_mean = cm;
    s.corr_std = sample_std(ci->second, cm);
    if (li != lsd_by_label.end() && !li->second.empty()) {
      double lm = 0;
      for (double v : li->second) lm += v;
      lm /= static_cast<double>(li->second.size());
      s.lsd_mean = lm;
      s.lsd_std = sample_std(li->second, lm);
    }
    out.push_back(s);
  }
  return out;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationSummary>& rows) {
  std::ofstream f(path);
  if (!f) throw UsageError("ablation csv: cannot write " + path);
  f << "ablation,present,trials,corr2d_mean,corr2d_std,lsd_mean,lsd_std\n";
  f << std::setprecision(10);
  for (const auto& r : rows) {
    f << r.label << "," << (r.present ? 1 : 0) << "," << r.trials << ","
      << r.corr_mean << "," << r.corr_std << "," << r.lsd_mean << ","
      << r.lsd_std << "\n";
  }
}

std::vector<AblationSummary> read_ablation_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("ablation csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) ||
      line != "ablation,present,trials,corr2d_mean,corr2d_std,lsd_mean,lsd_std") {
    throw UsageError("ablation csv: bad header in " + path);
  }
  std::vector<AblationSummary> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tok;
    auto next = [&]() {
      if (!std::getline(is, tok, ',')) {
        throw UsageError("ablation csv: bad row '" + line + "'");
      }
      return tok;
    };
    AblationSummary s;
    s.label = next();
    s.present = std::stoi(next()) != 0;
    s.trials = std::stoi(next());
    s.corr_mean = std::stod(next());
    s.corr_std = std::stod(next());
    s.lsd_mean = std::stod(next());
    s.lsd_std = std::stod(next());
    rows.push_back(std::move(s));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationSummary>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "config"
     << std::setw(22) << "Corr2D (mean+-std)"
     << "LSD dB, PESQ substitute (mean+-std)\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.label;
    if (!r.present) {
      os << "ABSENT\n";
      continue;
    }
    std::ostringstream corr, lsd;
    corr << std::fixed << std::setprecision(4) << r.corr_mean << " +- "
         << std::setprecision(4) << r.corr_std;
    lsd << std::fixed << std::setprecision(3) << r.lsd_mean << " +- "
        << std::setprecision(3) << r.lsd_std;
    os << std::setw(22) << corr.str() << lsd.str() << "\n";
  }
  return os.str();
}

}  // namespace sq2s
