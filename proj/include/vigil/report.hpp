#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vigil/evaluation.hpp"

namespace vigil {

// Percentage with two decimals, half-up: 0.848485 -> "84.85%".
inline std::string format_percent(double fraction) {
  const double scaled = fraction * 10000.0;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, std::abs(scaled)));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", rounded / 100.0);
  return buf;
}

inline std::string format_fraction(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", fraction);
  return buf;
}

namespace detail {

inline std::string render_table(const std::vector<std::vector<std::string>>& rows, std::size_t footer_from) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  const std::string rule(total > 2 ? total - 2 : 0, '-');

  std::ostringstream os;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r == 1 || (r == footer_from && r != 1)) os << rule << '\n';
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      // first column left-aligned, numbers right-aligned
      if (c == 0 || c == 1)
        line += cell + std::string(width[c] - cell.size(), ' ');
      else
        line += std::string(width[c] - cell.size(), ' ') + cell;
      if (c + 1 < rows[r].size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

}  // namespace detail

// One row per session followed by Average and STD footers over the
// per-session accuracies, then each confusion matrix (rows estimated,
// columns actual).
inline std::string render_report(std::span<const SessionReport> reports, std::span<const ConfusionMatrix> matrices) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Session ID", "Mode", "Epochs", "Correct", "Accuracy", "Percent"});
  std::vector<double> acc;
  for (const auto& r : reports) {
    rows.push_back({r.session_id, std::string(to_string(r.mode)), std::to_string(r.n_epochs),
                    std::to_string(r.n_correct), format_fraction(r.accuracy), format_percent(r.accuracy)});
    acc.push_back(r.accuracy);
  }
  const std::size_t footer = rows.size();
  if (acc.empty()) {
    rows.push_back({"Average", "", "", "", "n/a", "n/a"});
  } else {
    const double m = mean_of(acc);
    rows.push_back({"Average", "", "", "", format_fraction(m), format_percent(m)});
  }
  if (acc.size() < 2) {
    rows.push_back({"STD", "", "", "", "n/a", "n/a"});
  } else {
    const double s = sample_std_of(acc);
    rows.push_back({"STD", "", "", "", format_fraction(s), format_percent(s)});
  }

  std::string out = detail::render_table(rows, footer);
  for (const auto& m : matrices) {
    out += "\nConfusion matrix";
    if (!m.label.empty()) out += " - " + m.label;
    out += " (rows: estimated, columns: actual)\n";
    std::vector<std::vector<std::string>> t;
    t.push_back({"Estimated\\Actual", "", "Closed", "Open"});
    const char* names[2] = {"Closed", "Open"};
    for (std::size_t est = 0; est < 2; ++est)
      t.push_back({names[est], "", format_percent(m.normalized[est][0]) + " (" + std::to_string(m.counts[est][0]) + ")",
                   format_percent(m.normalized[est][1]) + " (" + std::to_string(m.counts[est][1]) + ")"});
    out += detail::render_table(t, t.size());
  }
  return out;
}

// Instructed/natural accuracies of one subject-session slot.
struct PairedRow {
  std::string label;
  double instructed{0.0};
  double natural{0.0};
  double combined() const { return (instructed + natural) / 2.0; }
};

struct PairedSummary {
  Summary instructed;
  Summary natural;
  // mean of the per-slot combined column; spread over every per-session
  // accuracy of both modes pooled together
  Summary combined;
};

inline PairedSummary paired_summary(std::span<const PairedRow> rows) {
  std::vector<double> a, b, c, pooled;
  for (const auto& r : rows) {
    a.push_back(r.instructed);
    b.push_back(r.natural);
    c.push_back(r.combined());
    pooled.push_back(r.instructed);
  }
  for (const auto& r : rows) pooled.push_back(r.natural);
  PairedSummary s;
  s.instructed = summarize(a);
  s.natural = summarize(b);
  s.combined = {mean_of(c), sample_std_of(pooled)};
  return s;
}

inline std::string render_paired_table(std::span<const PairedRow> rows) {
  std::vector<std::vector<std::string>> t;
  t.push_back({"Session ID", "", "Instructed", "Natural", "Combined"});
  for (const auto& r : rows)
    t.push_back({r.label, "", format_percent(r.instructed), format_percent(r.natural), format_percent(r.combined())});
  const std::size_t footer = t.size();
  if (rows.size() >= 2) {
    const auto s = paired_summary(rows);
    t.push_back({"Average", "", format_percent(s.instructed.mean), format_percent(s.natural.mean),
                 format_percent(s.combined.mean)});
    t.push_back({"STD", "", format_percent(s.instructed.sample_std), format_percent(s.natural.sample_std),
                 format_percent(s.combined.sample_std)});
  } else {
    t.push_back({"Average", "", "n/a", "n/a", "n/a"});
    t.push_back({"STD", "", "n/a", "n/a", "n/a"});
  }
  return detail::render_table(t, footer);
}

inline std::string reports_csv(std::span<const SessionReport> reports) {
  std::ostringstream os;
  os << "session_id,mode,n_epochs,n_correct,accuracy\n";
  for (const auto& r : reports)
    os << r.session_id << ',' << to_string(r.mode) << ',' << r.n_epochs << ',' << r.n_correct << ','
       << format_fraction(r.accuracy) << '\n';
  return os.str();
}

}  // namespace vigil
