#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agcl/train/inference.hpp"
#include "agcl/train/trainer.hpp"

namespace agcl::train {

/// One row of the metrics CSV; unset fields are written as empty cells.
struct MetricsRow {
  std::string run_id;
  std::string stage;
  std::optional<std::size_t> epoch;
  std::optional<double> loss;
  std::optional<double> dice_mean;
  std::vector<double> dice_per_object;
  std::optional<double> miou;
  std::optional<double> silhouette;
  std::optional<double> wall_clock_s;
};

std::string metrics_header(std::size_t n_objects);
std::string metrics_line(const MetricsRow& row, std::size_t n_objects);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                       std::size_t n_objects);

/// Per-epoch rows of a training history; wall clock only when requested.
std::vector<MetricsRow> history_rows(const std::string& run_id, const TrainHistory& h,
                                     bool record_time);

/// sample_id, m, o, pca_1, pca_2 and, with `raw`, z_1..z_D.
void write_embedding_csv(const std::filesystem::path& path, const EmbeddingReport& rep, bool raw);

/// Round-trip formatting used by every CSV writer.
std::string csv_number(double v);

}  // namespace agcl::train
