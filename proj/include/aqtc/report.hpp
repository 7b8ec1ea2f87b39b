#pragma once

// Plain-text tables, CSV files and small SVG charts for histories and
// result tables. Numbers are printed with fixed formats so that equal
// inputs give byte-identical files.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aqtc/ablation.hpp"
#include "aqtc/errors.hpp"
#include "aqtc/evaluation.hpp"
#include "aqtc/training.hpp"

namespace aqtc {

inline std::string format_number(double v, const char* fmt = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,loss,r1,r3\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_number(r.loss, "%.17g") << ',' << format_number(r.r1) << ','
        << format_number(r.r3) << '\n';
  }
  return out.str();
}

inline std::string ranks_csv(const EvalResult& result) {
  std::ostringstream out;
  out << "question_id,step,rank\n";
  for (const auto& s : result.per_step) out << s.question_id << ',' << s.step_index << ',' << s.rank << '\n';
  return out.str();
}

struct ResultRow {
  std::string label;
  std::vector<std::string> fields;  // config columns
  double r1 = 0.0;
  double r3 = 0.0;
};

struct ResultTable {
  std::vector<std::string> config_columns;
  std::vector<ResultRow> rows;
};

inline ResultTable ablation_table(const std::vector<AblationRow>& rows) {
  ResultTable table{{"use_hoi", "use_global", "temperature"}, {}};
  for (const auto& r : rows) {
    const std::string hoi = r.config.use_hoi ? "true" : "false";
    const std::string global = r.config.use_global ? "true" : "false";
    const auto temp = format_number(r.config.temperature, "%g");
    table.rows.push_back({"hoi=" + hoi + " global=" + global + " t=" + temp, {hoi, global, temp}, r.result.r1, r.result.r3});
  }
  return table;
}

inline std::string table_csv(const ResultTable& table) {
  std::ostringstream out;
  for (const auto& c : table.config_columns) out << c << ',';
  out << "r1,r3\n";
  for (const auto& row : table.rows) {
    for (const auto& f : row.fields) out << f << ',';
    out << format_number(row.r1) << ',' << format_number(row.r3) << '\n';
  }
  return out.str();
}

// Aligned text table with recall shown as percentages.
inline std::string table_text(const ResultTable& table) {
  std::vector<std::string> header = table.config_columns;
  header.push_back("R@1");
  header.push_back("R@3");
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& row : table.rows) {
    auto line = row.fields;
    line.push_back(format_number(100.0 * row.r1, "%.1f"));
    line.push_back(format_number(100.0 * row.r3, "%.1f"));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t c = 0; c < cells[l].size(); ++c) {
      if (c > 0) out << (c + 2 == cells[l].size() ? " | " : "  ");
      out << cells[l][c] << std::string(width[c] - cells[l][c].size(), ' ');
    }
    out << '\n';
    if (l == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total + 1, '-') << '\n';
    }
  }
  return out.str();
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr double kWidth = 640, kHeight = 360, kLeft = 60, kRight = 20, kTop = 30, kBottom = 90;

}  // namespace detail

// Grouped bar chart: R@1 and R@3 per row.
inline std::string bar_chart_svg(const ResultTable& table, const std::string& title) {
  using namespace detail;
  std::ostringstream out;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
      << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = kTop + plot_h * (1.0 - tick / 4.0);
    out << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << tick * 25
        << "</text>\n";
  }
  const auto n = std::max<std::size_t>(table.rows.size(), 1);
  const double group = plot_w / static_cast<double>(n);
  const double bar = group * 0.35;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const double x0 = kLeft + group * static_cast<double>(i) + group * 0.15;
    const double vals[2] = {row.r1, row.r3};
    const char* colors[2] = {"#4c72b0", "#dd8452"};
    for (int k = 0; k < 2; ++k) {
      const double h = plot_h * std::clamp(vals[k], 0.0, 1.0);
      out << "<rect x=\"" << format_number(x0 + bar * k, "%.2f") << "\" y=\"" << format_number(kTop + plot_h - h, "%.2f")
          << "\" width=\"" << format_number(bar, "%.2f") << "\" height=\"" << format_number(h, "%.2f") << "\" fill=\""
          << colors[k] << "\"/>\n";
    }
    out << "<text x=\"" << format_number(x0 + bar, "%.2f") << "\" y=\"" << kTop + plot_h + 14
        << "\" text-anchor=\"middle\" font-size=\"9\">" << svg_escape(row.label) << "</text>\n";
  }
  out << "<rect x=\"" << kWidth - 150 << "\" y=\"" << kHeight - 30 << "\" width=\"10\" height=\"10\" fill=\"#4c72b0\"/>"
      << "<text x=\"" << kWidth - 136 << "\" y=\"" << kHeight - 21 << "\" font-size=\"10\">R@1</text>\n";
  out << "<rect x=\"" << kWidth - 90 << "\" y=\"" << kHeight - 30 << "\" width=\"10\" height=\"10\" fill=\"#dd8452\"/>"
      << "<text x=\"" << kWidth - 76 << "\" y=\"" << kHeight - 21 << "\" font-size=\"10\">R@3</text>\n";
  out << "</svg>\n";
  return out.str();
}

// Loss (left axis, scaled to its maximum) and R@1 / R@3 (0..1) per epoch.
inline std::string history_svg(const std::vector<EpochRecord>& history, const std::string& title) {
  using namespace detail;
  std::ostringstream out;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
      << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
  double max_loss = 0.0;
  for (const auto& r : history) max_loss = std::max(max_loss, r.loss);
  if (max_loss <= 0.0) max_loss = 1.0;
  const double last_epoch = history.empty() ? 1.0 : std::max<double>(history.back().epoch, 1.0);
  auto polyline = [&](auto value, double scale, const char* color) {
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& r : history) {
      const double x = kLeft + plot_w * (static_cast<double>(r.epoch) / last_epoch);
      const double y = kTop + plot_h * (1.0 - std::clamp(value(r) / scale, 0.0, 1.0));
      out << format_number(x, "%.2f") << ',' << format_number(y, "%.2f") << ' ';
    }
    out << "\"/>\n";
  };
  polyline([](const EpochRecord& r) { return r.loss; }, max_loss, "#c44e52");
  polyline([](const EpochRecord& r) { return r.r1; }, 1.0, "#4c72b0");
  polyline([](const EpochRecord& r) { return r.r3; }, 1.0, "#dd8452");
  out << "<text x=\"" << kLeft << "\" y=\"" << kHeight - 50 << "\" font-size=\"10\">epochs 1.." << last_epoch
      << "; loss max " << format_number(max_loss, "%.4g") << "</text>\n";
  const char* names[3] = {"loss", "R@1", "R@3"};
  const char* colors[3] = {"#c44e52", "#4c72b0", "#dd8452"};
  for (int k = 0; k < 3; ++k) {
    const double x = kWidth - 220 + 70 * k;
    out << "<rect x=\"" << x << "\" y=\"" << kHeight - 30 << "\" width=\"10\" height=\"10\" fill=\"" << colors[k]
        << "\"/><text x=\"" << x + 14 << "\" y=\"" << kHeight - 21 << "\" font-size=\"10\">" << names[k] << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// Splits simple comma-separated lines (no quoting).
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

// Renders either a training history CSV (epoch,loss,r1,r3) or a result
// table CSV (config columns..., r1, r3) to SVG.
inline std::string render_csv_svg(const std::filesystem::path& csv, const std::string& title) {
  const auto rows = read_csv(csv);
  if (rows.empty()) throw ValidationError("empty CSV: " + csv.string());
  const auto& header = rows.front();
  auto parse = [&](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ValidationError("non-numeric field '" + s + "' in " + csv.string());
    }
  };
  if (header == std::vector<std::string>{"epoch", "loss", "r1", "r3"}) {
    std::vector<EpochRecord> history;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 4) throw ValidationError("malformed history row in " + csv.string());
      history.push_back({static_cast<std::uint32_t>(parse(rows[i][0])), parse(rows[i][1]), parse(rows[i][2]),
                         parse(rows[i][3])});
    }
    return history_svg(history, title);
  }
  if (header.size() < 2 || header[header.size() - 2] != "r1" || header.back() != "r3") {
    throw ValidationError("unrecognized CSV layout in " + csv.string());
  }
  ResultTable table;
  table.config_columns.assign(header.begin(), header.end() - 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) throw ValidationError("malformed table row in " + csv.string());
    ResultRow row;
    row.fields.assign(rows[i].begin(), rows[i].end() - 2);
    for (std::size_t c = 0; c < row.fields.size(); ++c) {
      row.label += (c ? " " : "") + table.config_columns[c] + "=" + row.fields[c];
    }
    row.r1 = parse(rows[i][header.size() - 2]);
    row.r3 = parse(rows[i].back());
    table.rows.push_back(std::move(row));
  }
  return bar_chart_svg(table, title);
}

}  // namespace aqtc
