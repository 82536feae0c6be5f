#include "hiernet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "hiernet/error.hpp"

namespace hiernet::eval {

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (std::size_t v : row) n += v;
  return n;
}

std::size_t ConfusionMatrix::trace() const noexcept {
  std::size_t n = 0;
  for (std::size_t k = 0; k < 4; ++k) n += counts[k][k];
  return n;
}

std::size_t ConfusionMatrix::row_sum(LeafLabel truth) const noexcept {
  std::size_t n = 0;
  for (std::size_t v : counts[static_cast<std::size_t>(truth)]) n += v;
  return n;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) throw std::invalid_argument("accuracy of an empty confusion matrix");
  return static_cast<double>(trace()) / static_cast<double>(n);
}

ConfusionMatrix confusion_from_predictions(std::span<const LeafLabel> truth,
                                           std::span<const LeafLabel> predicted) {
  if (truth.empty()) throw std::invalid_argument("confusion matrix of an empty set");
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("truth and prediction lengths differ");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++cm.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return cm;
}

ConfusionMatrix confusion(const hierarchy::HierarchyTree& tree, const Tensor& samples,
                          std::span<const LeafLabel> truth) {
  if (samples.rows() == 0) throw std::invalid_argument("confusion matrix of an empty set");
  if (samples.rows() != truth.size()) throw std::invalid_argument("sample and label counts differ");
  std::vector<LeafLabel> predicted;
  predicted.reserve(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    predicted.push_back(hierarchy::predict_hard(tree, samples.row_copy(r)));
  }
  return confusion_from_predictions(truth, predicted);
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\pred";
  for (LeafLabel label : hierarchy::kLeafLabels) out << ',' << hierarchy::leaf_name(label);
  out << '\n';
  for (LeafLabel truth : hierarchy::kLeafLabels) {
    out << hierarchy::leaf_name(truth);
    for (std::size_t v : cm.counts[static_cast<std::size_t>(truth)]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

double node_accuracy(const hierarchy::NodeModel& model, const Tensor& samples,
                     std::span<const int> labels) {
  if (samples.rows() == 0) throw std::invalid_argument("node accuracy of an empty set");
  if (samples.rows() != labels.size()) throw std::invalid_argument("sample and label counts differ");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    if (hierarchy::node_argmax(model.probability(samples.row_copy(r))) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.rows());
}

// ---------------------------------------------------------------------------
// Table
// ---------------------------------------------------------------------------

PerformanceTable render_table(std::span<const TableEntry> entries, std::span<const std::string> columns) {
  PerformanceTable table;
  for (std::string_view known : kTableRows) {
    const bool present = std::any_of(entries.begin(), entries.end(),
                                      [&](const TableEntry& e) { return e.model == known; });
    if (present) table.rows.emplace_back(known);
  }
  for (const auto& e : entries) {
    if (std::find(table.rows.begin(), table.rows.end(), e.model) == table.rows.end()) {
      table.rows.push_back(e.model);
    }
  }
  if (!columns.empty()) {
    table.columns.assign(columns.begin(), columns.end());
  } else {
    for (const auto& e : entries) {
      if (std::find(table.columns.begin(), table.columns.end(), e.column) == table.columns.end()) {
        table.columns.push_back(e.column);
      }
    }
  }
  table.cells.assign(table.rows.size(), std::vector<std::optional<double>>(table.columns.size()));
  for (const auto& e : entries) {
    const auto r = std::find(table.rows.begin(), table.rows.end(), e.model) - table.rows.begin();
    const auto c = std::find(table.columns.begin(), table.columns.end(), e.column) - table.columns.begin();
    if (static_cast<std::size_t>(c) == table.columns.size()) continue;
    table.cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = e.accuracy;
  }
  return table;
}

std::string format_accuracy(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  std::string text(buf);
  if (text.back() == '0') text.pop_back();
  return text;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(field);
  return fields;
}

}  // namespace

std::string table_csv(const PerformanceTable& table) {
  std::ostringstream out;
  out << "Models";
  for (const auto& c : table.columns) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << table.rows[r];
    for (const auto& cell : table.cells[r]) {
      out << ',' << (cell ? format_accuracy(*cell) : std::string(kAbsentCell));
    }
    out << '\n';
  }
  return out.str();
}

PerformanceTable parse_table_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty table CSV");
  PerformanceTable table;
  auto header = split_csv_line(line);
  table.columns.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw DataError("table CSV row has the wrong field count");
    table.rows.push_back(fields[0]);
    std::vector<std::optional<double>> cells;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c] == kAbsentCell) {
        cells.emplace_back();
      } else {
        try {
          cells.emplace_back(std::stod(fields[c]));
        } catch (const std::exception&) {
          throw DataError("table CSV cell '" + fields[c] + "' is not a number");
        }
      }
    }
    table.cells.push_back(std::move(cells));
  }
  return table;
}

std::string table_text(const PerformanceTable& table) {
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"Models"});
  for (const auto& c : table.columns) grid.back().push_back(c);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    grid.push_back({table.rows[r]});
    for (const auto& cell : table.cells[r]) {
      grid.back().push_back(cell ? format_accuracy(*cell) : std::string(kAbsentCell));
    }
  }
  std::vector<std::size_t> widths(grid.front().size(), 0);
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c == 0 ? "" : " | ") << row[c] << std::string(widths[c] - row[c].size(), ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace hiernet::eval
