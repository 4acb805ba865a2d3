#include "segscribe/alphabet.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "segscribe/error.hpp"

namespace segscribe {

const std::vector<PhonologicalFeature>& phonological_features() {
  static const std::vector<PhonologicalFeature> features = {
      {"sf_point_of_reference", {"SIL", "radial", "ulnar", "radial/ulnar"}},
      {"sf_joints",
       {"SIL", "flexed:base", "flexed:nonbase", "flexed:base&nonbase", "stacked", "crossed",
        "spread"}},
      {"sf_quantity", {"N/A", "all", "one", "one>all", "all>one"}},
      {"sf_thumb", {"N/A", "unopposed", "opposed"}},
      {"sf_handpart", {"SIL", "base", "palm", "ulnar"}},
      {"uf", {"SIL", "open", "closed"}},
  };
  return features;
}

const std::vector<std::string>& phonetic_columns() {
  static const std::vector<std::string> columns = {
      "index_mcp", "index_pip", "middle_mcp", "middle_pip", "ring_mcp",
      "ring_pip",  "pinky_mcp", "pinky_pip",  "spread",     "thumb_y",
      "thumb_z",   "thumb_pip", "touch",      "palm"};
  return columns;
}

const std::array<std::array<std::string_view, 14>, kNumLetters>& phonetic_table() {
  // clang-format off
  static const std::array<std::array<std::string_view, 14>, kNumLetters> table = {{
      {"90", "90", "90", "90", "90", "90", "90", "90", "0", "0", "90", "180", "i", "for"},
      {"180", "180", "180", "180", "180", "180", "180", "180", "0", "-45", "90", "180", "r", "for"},
      {"180", "90", "180", "90", "180", "90", "180", "90", "0", "0", "0", "135", "-", "for"},
      {"180", "180", "90", "135", "90", "90", "90", "90", "0", "0", "45", "180", "m", "for"},
      {"135", "90", "135", "90", "135", "90", "135", "90", "0", "-45", "0", "90", "r", "for"},
      {"90", "135", "180", "180", "180", "180", "180", "180", "1", "0", "45", "180", "i", "for"},
      {"180", "180", "90", "90", "90", "90", "90", "90", "0", "0", "90", "180", "m", "in"},
      {"180", "180", "180", "180", "90", "90", "90", "90", "0", "-45", "90", "180", "r", "in"},
      {"90", "90", "90", "90", "90", "90", "180", "180", "0", "-45", "90", "180", "r", "for"},
      {"90", "90", "90", "90", "90", "90", "180", "180", "0", "-45", "90", "180", "r", "dwn"},
      {"180", "180", "90", "180", "90", "90", "90", "90", "0", "0", "90", "180", "m", "for"},
      {"180", "180", "90", "90", "90", "90", "90", "90", "0", "90", "0", "180", "-", "for"},
      {"90", "135", "90", "135", "90", "135", "90", "90", "0", "-45", "90", "180", "p", "for"},
      {"90", "135", "90", "135", "90", "90", "90", "90", "0", "-45", "90", "180", "r", "for"},
      {"135", "135", "135", "135", "135", "135", "135", "135", "0", "-45", "0", "180", "m/i", "for"},
      {"180", "180", "90", "180", "90", "90", "90", "90", "0", "0", "90", "180", "m", "dwn"},
      {"180", "180", "90", "90", "90", "90", "90", "90", "0", "0", "90", "180", "m", "dwn"},
      {"180", "180", "180", "180", "90", "90", "90", "90", "-1", "-45", "0", "180", "r", "for"},
      {"90", "90", "90", "90", "90", "90", "90", "90", "0", "-45", "45", "180", "r", "for"},
      {"90", "135", "90", "90", "90", "90", "90", "90", "0", "-45", "90", "180", "m", "for"},
      {"180", "180", "180", "180", "90", "90", "90", "90", "0", "-45", "90", "180", "r", "for"},
      {"180", "180", "180", "180", "90", "90", "90", "90", "1", "-45", "90", "180", "r", "for"},
      {"180", "180", "180", "180", "180", "180", "90", "90", "1", "-45", "90", "180", "p", "for"},
      {"180", "135", "90", "90", "90", "90", "90", "90", "0", "-45", "45", "180", "m", "for"},
      {"90", "90", "90", "90", "90", "90", "180", "180", "1", "90", "0", "180", "-", "for"},
      {"180", "180", "90", "90", "90", "90", "90", "90", "0", "0", "45", "180", "m", "for"},
  }};
  // clang-format on
  return table;
}

LabelAlphabet::LabelAlphabet() {
  for (int i = 0; i < kNumLetters; ++i) symbols_.emplace_back(1, static_cast<char>('A' + i));
  symbols_.emplace_back(kBosSymbol);
  symbols_.emplace_back(kEosSymbol);

  const auto& table = phonetic_table();
  phonetic_value_sets_.resize(phonetic_columns().size());
  for (std::size_t c = 0; c < phonetic_columns().size(); ++c) {
    auto& values = phonetic_value_sets_[c];
    values.emplace_back("SIL");
    for (const auto& row : table) {
      std::string v(row[c]);
      if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    }
  }
}

LabelAlphabet LabelAlphabet::standard() { return LabelAlphabet(); }

std::string_view LabelAlphabet::symbol(Label l) const {
  if (l < 0 || l >= kNumLabels) throw UsageError("label id out of range: " + std::to_string(l));
  return symbols_[static_cast<std::size_t>(l)];
}

std::optional<Label> LabelAlphabet::find(std::string_view symbol) const {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == symbol) return static_cast<Label>(i);
  }
  return std::nullopt;
}

Label LabelAlphabet::label(std::string_view symbol) const {
  auto l = find(symbol);
  if (!l) throw DataError("unknown label symbol '" + std::string(symbol) + "'");
  return *l;
}

std::vector<Label> LabelAlphabet::letters_of(std::string_view word) const {
  std::vector<Label> out;
  out.reserve(word.size());
  for (char c : word) {
    if (c < 'A' || c > 'Z') throw DataError("not an FS-letter: '" + std::string(1, c) + "'");
    out.push_back(c - 'A');
  }
  return out;
}

std::string LabelAlphabet::word_of(const std::vector<Label>& labels) const {
  std::string out;
  for (Label l : labels) {
    if (is_letter(l)) out.push_back(static_cast<char>('A' + l));
  }
  return out;
}

int LabelAlphabet::phonological_value(int feature, Label l) const {
  if (!has_phonological()) throw UsageError("no phonological feature table loaded");
  if (!is_letter(l)) return 0;
  return phonological_[static_cast<std::size_t>(l)][static_cast<std::size_t>(feature)];
}

void LabelAlphabet::set_phonological(std::vector<std::array<int, 6>> per_letter) {
  if (per_letter.size() != kNumLetters) throw DataError("phonological table needs 26 rows");
  const auto& features = phonological_features();
  for (const auto& row : per_letter) {
    for (std::size_t f = 0; f < 6; ++f) {
      if (row[f] < 0 || row[f] >= static_cast<int>(features[f].values.size())) {
        throw DataError("phonological value out of range for " + features[f].name);
      }
    }
  }
  phonological_ = std::move(per_letter);
}

void LabelAlphabet::load_phonological(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open phonological table " + path);
  const auto& features = phonological_features();
  std::vector<std::array<int, 6>> rows(kNumLetters);
  std::vector<bool> seen(kNumLetters, false);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string letter;
    std::getline(ss, letter, '\t');
    if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'Z') {
      throw DataError("bad letter in phonological table: " + letter);
    }
    const int li = letter[0] - 'A';
    for (std::size_t f = 0; f < 6; ++f) {
      std::string value;
      if (!std::getline(ss, value, '\t')) throw DataError("short phonological row for " + letter);
      const auto& vs = features[f].values;
      auto it = std::find(vs.begin(), vs.end(), value);
      if (it == vs.end()) throw DataError("unknown value '" + value + "' for " + features[f].name);
      rows[static_cast<std::size_t>(li)][f] = static_cast<int>(it - vs.begin());
    }
    seen[static_cast<std::size_t>(li)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError("phonological table must have one row per letter");
  }
  phonological_ = std::move(rows);
}

int LabelAlphabet::phonetic_classes(int column) const {
  return static_cast<int>(phonetic_value_sets_.at(static_cast<std::size_t>(column)).size());
}

int LabelAlphabet::phonetic_value(int column, Label l) const {
  if (!is_letter(l)) return 0;
  const auto& values = phonetic_value_sets_.at(static_cast<std::size_t>(column));
  std::string v(phonetic_table()[static_cast<std::size_t>(l)][static_cast<std::size_t>(column)]);
  return static_cast<int>(std::find(values.begin(), values.end(), v) - values.begin());
}

}  // namespace segscribe
