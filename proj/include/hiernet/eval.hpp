#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiernet/hierarchy.hpp"
#include "hiernet/tensor.hpp"

namespace hiernet::eval {

using hierarchy::LeafLabel;

/// Rows are true labels, columns predictions, both in LeafLabel order.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 4>, 4> counts{};

  std::size_t total() const noexcept;
  std::size_t trace() const noexcept;
  std::size_t row_sum(LeafLabel truth) const noexcept;
  double accuracy() const;
};

ConfusionMatrix confusion_from_predictions(std::span<const LeafLabel> truth,
                                           std::span<const LeafLabel> predicted);

/// Hard-routing predictions of `tree` on every row of `samples`.
ConfusionMatrix confusion(const hierarchy::HierarchyTree& tree, const Tensor& samples,
                          std::span<const LeafLabel> truth);

/// `true\pred` header row followed by one row per true label.
std::string confusion_csv(const ConfusionMatrix& cm);

double node_accuracy(const hierarchy::NodeModel& model, const Tensor& samples,
                     std::span<const int> labels);

// ---------------------------------------------------------------------------
// Performance table
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 4> kTableRows{"Carci", "NorBe", "InvIs",
                                                            "Whole system"};

struct TableEntry {
  std::string model;
  std::string column;
  double accuracy;
};

struct PerformanceTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> cells;  // [row][column]

  friend bool operator==(const PerformanceTable&, const PerformanceTable&) = default;
};

/// Rows follow kTableRows order (unknown models after them, in order of
/// appearance) and include only models that occur in `entries`. Columns are
/// `columns` when given, otherwise the order of first appearance.
PerformanceTable render_table(std::span<const TableEntry> entries,
                              std::span<const std::string> columns = {});

/// Three decimals with trailing zeros trimmed down to two: 1.00, 0.98, 0.965.
std::string format_accuracy(double value);

inline constexpr std::string_view kAbsentCell = "-";

std::string table_csv(const PerformanceTable& table);
PerformanceTable parse_table_csv(const std::string& csv);
std::string table_text(const PerformanceTable& table);

}  // namespace hiernet::eval
