#include "dpodyn/dataset_io.hpp"

#include "dpodyn/errors.hpp"
#include "dpodyn/format.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace dpodyn {
namespace {

constexpr const char* kFormat = "pref-embed/1";

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r") == std::string::npos; }

// Groups records by behavior in order of first appearance.
class Grouper {
 public:
  void add(const std::string& behavior, LabeledEmbedding sample) {
    auto [it, inserted] = index_.try_emplace(behavior, behaviors_.size());
    if (inserted) behaviors_.push_back({behavior, {}});
    behaviors_[it->second].samples.push_back(std::move(sample));
  }
  bool empty() const { return behaviors_.empty(); }
  std::vector<Behavior> take() { return std::move(behaviors_); }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<Behavior> behaviors_;
};

Label parse_label(const std::string& text, std::size_t line) {
  if (text == "+") return Label::kPositive;
  if (text == "-") return Label::kNegative;
  throw Error(ErrorKind::kParse, at_line(line) + "label must be \"+\" or \"-\", got '" + text + "'");
}

}  // namespace

void write_dataset(const BehaviorDataset& dataset, std::ostream& out) {
  out << "{\"format\":\"" << kFormat << "\",\"d\":" << dataset.dim() << "}\n";
  for (const auto& behavior : dataset.behaviors()) {
    const std::string id = nlohmann::json(behavior.id).dump();
    for (const auto& s : behavior.samples) {
      out << "{\"behavior\":" << id << ",\"label\":\""
          << (s.label == Label::kPositive ? "+" : "-") << "\",\"embedding\":[";
      for (Eigen::Index j = 0; j < s.vector.size(); ++j) {
        if (j) out << ',';
        out << format_number(s.vector[j]);
      }
      out << "]}\n";
    }
  }
}

BehaviorDataset read_dataset(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  std::optional<int> d;
  Grouper grouper;
  while (std::getline(in, text)) {
    ++line_no;
    if (blank(text)) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::kParse, at_line(line_no) + "malformed JSON (" + e.what() + ")");
    }
    if (!record.is_object()) throw Error(ErrorKind::kParse, at_line(line_no) + "expected an object");
    if (!d) {
      if (!record.contains("format") || record["format"] != kFormat || !record.contains("d") ||
          !record["d"].is_number_integer()) {
        throw Error(ErrorKind::kParse, at_line(line_no) +
                                           "missing header {\"format\":\"pref-embed/1\",\"d\":int}");
      }
      d = record["d"].get<int>();
      if (*d < 1) throw Error(ErrorKind::kSchema, at_line(line_no) + "d must be positive");
      continue;
    }
    if (!record.contains("behavior") || !record["behavior"].is_string() ||
        !record.contains("label") || !record["label"].is_string() ||
        !record.contains("embedding") || !record["embedding"].is_array()) {
      throw Error(ErrorKind::kParse,
                  at_line(line_no) + "record needs string behavior, label and an embedding array");
    }
    const auto& embedding = record["embedding"];
    if (static_cast<int>(embedding.size()) != *d) {
      std::ostringstream msg;
      msg << at_line(line_no) << "embedding has " << embedding.size() << " coordinates, header says "
          << *d;
      throw Error(ErrorKind::kSchema, msg.str());
    }
    Vector v(*d);
    for (int j = 0; j < *d; ++j) {
      if (!embedding[static_cast<std::size_t>(j)].is_number()) {
        throw Error(ErrorKind::kParse, at_line(line_no) + "embedding entries must be numbers");
      }
      v[j] = embedding[static_cast<std::size_t>(j)].get<double>();
    }
    grouper.add(record["behavior"].get<std::string>(),
                {std::move(v), parse_label(record["label"].get<std::string>(), line_no)});
  }
  if (grouper.empty()) throw Error(ErrorKind::kEmptyDataset, "dataset file has no records");
  return BehaviorDataset::create(*d, grouper.take());
}

void save_dataset(const BehaviorDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  write_dataset(dataset, out);
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

BehaviorDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  if (path.extension() == ".csv") return read_dataset_csv(in);
  return read_dataset(in);
}

BehaviorDataset read_dataset_csv(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  std::optional<int> d;
  Grouper grouper;
  while (std::getline(in, text)) {
    ++line_no;
    if (blank(text)) continue;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::vector<std::string> fields;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!fields.empty() && fields[0] == "behavior" && grouper.empty() && !d) continue;
    if (fields.size() < 3) {
      throw Error(ErrorKind::kParse, at_line(line_no) + "expected behavior,label,v1..vd");
    }
    const int width = static_cast<int>(fields.size()) - 2;
    if (!d) d = width;
    if (width != *d) {
      std::ostringstream msg;
      msg << at_line(line_no) << "row has " << width << " coordinates, expected " << *d;
      throw Error(ErrorKind::kSchema, msg.str());
    }
    Vector v(*d);
    for (int j = 0; j < *d; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j) + 2];
      std::size_t used = 0;
      try {
        v[j] = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != f.size()) {
        throw Error(ErrorKind::kParse, at_line(line_no) + "not a number: '" + f + "'");
      }
    }
    grouper.add(fields[0], {std::move(v), parse_label(fields[1], line_no)});
  }
  if (grouper.empty()) throw Error(ErrorKind::kEmptyDataset, "CSV file has no records");
  return BehaviorDataset::create(*d, grouper.take());
}

BehaviorDataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return read_dataset_csv(in);
}

}  // namespace dpodyn
