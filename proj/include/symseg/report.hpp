#pragma once

#include "symseg/config.hpp"
#include "symseg/continual.hpp"
#include "symseg/metrics.hpp"

#include <string>
#include <vector>

namespace symseg {

// Canonical number rendering for every text report: %.10g with lowercase
// "nan"/"inf", so identical runs emit byte-identical files on any host.
std::string format_double(double value);

// step,branch,class,iou (branch spelled color/lidar; undefined IoU as nan)
std::string iou_rows_csv(const std::vector<IouRow>& rows);

// step,iteration,loss
std::string loss_curves_csv(const std::vector<std::vector<double>>& curves);

// class,iou rows in class-id order with a trailing mean row
std::string per_class_csv(const IouReport& report);

// setting,color_branch,lidar_branch with rows both/color_only/lidar_only
// and the per-branch average row
std::string modality_table_csv(const ModalityTable& table);

// Run manifest: config digest (hex), seed, schedule, the canonical
// key=value entries, and the derived plan shape. Never includes wall-clock.
std::string run_manifest_json(const RunConfig& cfg, const KeyValueConfig& kv);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void ensure_directory(const std::string& path);

}  // namespace symseg
