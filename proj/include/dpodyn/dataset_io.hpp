#pragma once

#include "dpodyn/dataset.hpp"

#include <filesystem>
#include <iosfwd>

namespace dpodyn {

// JSON Lines: a {"format":"pref-embed/1","d":<int>} header, then one
// {"behavior":..., "label":"+"|"-", "embedding":[...]} record per sample.
void write_dataset(const BehaviorDataset& dataset, std::ostream& out);
BehaviorDataset read_dataset(std::istream& in);

void save_dataset(const BehaviorDataset& dataset, const std::filesystem::path& path);
BehaviorDataset load_dataset(const std::filesystem::path& path);

// Read-only CSV import: behavior,label,v1..vd per line; an optional header
// line starting with "behavior" is skipped.
BehaviorDataset read_dataset_csv(std::istream& in);
BehaviorDataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace dpodyn
