#include "agcl/train/report.hpp"

#include <cstdio>
#include <fstream>

namespace agcl::train {

std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_header(std::size_t n_objects) {
  std::string h = "run_id,stage,epoch,loss,dice_mean";
  for (std::size_t o = 1; o <= n_objects; ++o) h += ",dice_o" + std::to_string(o);
  return h + ",miou,silhouette,wall_clock_s";
}

std::string metrics_line(const MetricsRow& r, std::size_t n_objects) {
  auto opt = [](const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); };
  std::string line = r.run_id + "," + r.stage + "," + (r.epoch ? std::to_string(*r.epoch) : "") + "," +
                     opt(r.loss) + "," + opt(r.dice_mean);
  for (std::size_t o = 0; o < n_objects; ++o) {
    line += ",";
    if (o < r.dice_per_object.size()) line += csv_number(r.dice_per_object[o]);
  }
  return line + "," + opt(r.miou) + "," + opt(r.silhouette) + "," + opt(r.wall_clock_s);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                       std::size_t n_objects) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StructuralError("cannot write " + path.string());
  out << metrics_header(n_objects) << "\n";
  for (const auto& r : rows) out << metrics_line(r, n_objects) << "\n";
}

std::vector<MetricsRow> history_rows(const std::string& run_id, const TrainHistory& h,
                                     bool record_time) {
  std::vector<MetricsRow> rows;
  for (const auto& e : h.epochs) {
    MetricsRow r;
    r.run_id = run_id;
    r.stage = h.stage;
    r.epoch = e.epoch;
    r.loss = e.loss;
    rows.push_back(std::move(r));
  }
  if (record_time && !rows.empty()) rows.back().wall_clock_s = h.wall_clock_s;
  return rows;
}

void write_embedding_csv(const std::filesystem::path& path, const EmbeddingReport& rep, bool raw) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StructuralError("cannot write " + path.string());
  const std::size_t n = rep.patches.size(), d = rep.z.dim(1), k = rep.pca.coords.dim(1);
  out << "sample_id,m,o,pca_1,pca_2";
  if (raw)
    for (std::size_t j = 1; j <= d; ++j) out << ",z_" << j;
  out << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = rep.patches[i];
    out << p.source << "," << p.modality << "," << p.object;
    for (std::size_t c = 0; c < 2; ++c) out << "," << (c < k ? csv_number(rep.pca.coords[i * k + c]) : "");
    if (raw)
      for (std::size_t j = 0; j < d; ++j) out << "," << csv_number(rep.z[i * d + j]);
    out << "\n";
  }
}

}  // namespace agcl::train
