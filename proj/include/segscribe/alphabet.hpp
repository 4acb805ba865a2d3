#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace segscribe {

/// Label ids are dense: letters A..Z are 0..25, then BOS and EOS.
using Label = int;

inline constexpr int kNumLetters = 26;
inline constexpr Label kBos = 26;
inline constexpr Label kEos = 27;
inline constexpr int kNumLabels = 28;

inline constexpr std::string_view kBosSymbol = "<s>";
inline constexpr std::string_view kEosSymbol = "</s>";

inline bool is_letter(Label l) { return l >= 0 && l < kNumLetters; }

/// One phonological feature: a name and its ordered value set.
struct PhonologicalFeature {
  std::string name;
  std::vector<std::string> values;
};

/// The six handshape features with their value sets. Value 0 is always the
/// silence/not-applicable value used for BOS/EOS frames.
const std::vector<PhonologicalFeature>& phonological_features();

/// Column names of the per-letter joint-angle table.
const std::vector<std::string>& phonetic_columns();

/// Per-letter joint-angle table rows (letter order A..Z), values as strings
/// because the touch/palm columns are categorical.
const std::array<std::array<std::string_view, 14>, kNumLetters>& phonetic_table();

/// The 26-letter alphabet plus sentence boundaries, with optional per-letter
/// feature tables used by the auxiliary classifier heads.
class LabelAlphabet {
 public:
  LabelAlphabet();

  static LabelAlphabet standard();

  std::string_view symbol(Label l) const;
  /// Returns nullopt for unknown symbols.
  std::optional<Label> find(std::string_view symbol) const;
  /// Throws DataError for unknown symbols.
  Label label(std::string_view symbol) const;

  /// Letter symbols of a word, e.g. "ART" -> {A, R, T}. Throws on non-letters.
  std::vector<Label> letters_of(std::string_view word) const;
  std::string word_of(const std::vector<Label>& labels) const;

  bool has_phonological() const { return !phonological_.empty(); }
  /// Per-letter value index for every phonological feature; BOS/EOS map to 0.
  int phonological_value(int feature, Label l) const;
  /// Loads "letter<TAB>v1<TAB>...<TAB>v6" lines, value names from the feature
  /// value sets.
  void load_phonological(const std::string& path);
  void set_phonological(std::vector<std::array<int, 6>> per_letter);

  bool has_phonetic() const { return phonetic_enabled_; }
  void enable_phonetic() { phonetic_enabled_ = true; }
  /// Class count of one phonetic column head (distinct column values + SIL).
  int phonetic_classes(int column) const;
  int phonetic_value(int column, Label l) const;

 private:
  std::vector<std::string> symbols_;
  std::vector<std::array<int, 6>> phonological_;
  bool phonetic_enabled_ = false;
  std::vector<std::vector<std::string>> phonetic_value_sets_;
};

}  // namespace segscribe
