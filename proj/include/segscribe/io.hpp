#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "segscribe/types.hpp"

namespace segscribe::io {

// Little-endian primitives shared by all binary formats.
void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);

/// Descriptor file: "SGDS" magic, u32 T, u32 D, f32 frame rate, then T*D
/// row-major little-endian f32 values.
void write_descriptors(const std::string& path, const FrameSequence& seq);
FrameSequence read_descriptors(const std::string& path, const std::string& source_id = "");

/// One annotation record:
///   word<TAB>signer<TAB>T<TAB>frame:LETTER[,flags] frame:LETTER[,flags] ...
/// Flags: '+' non-canonical, '*' undetected. A two-letter label is a digraph.
std::string format_annotation(const PeakAnnotation& ann);
PeakAnnotation parse_annotation(const std::string& line);
void write_annotations(const std::string& path, const std::vector<PeakAnnotation>& anns);
std::vector<PeakAnnotation> read_annotations(const std::string& path);

/// Hypothesis/reference files: one space-separated label sequence per line.
void write_label_sequences(const std::string& path, const std::vector<std::vector<Label>>& seqs);
std::vector<std::vector<Label>> read_label_sequences(const std::string& path);
std::string format_labels(const std::vector<Label>& labels);
std::vector<Label> parse_labels(const std::string& line);

enum class FoldRole { kTrain, kDev, kTest };
const char* role_name(FoldRole role);

struct ManifestEntry {
  std::string utterance;
  int fold = 0;
  FoldRole role = FoldRole::kTrain;
};

/// Split manifest: one "utterance<TAB>fold<TAB>role" line per entry.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// Per-frame integer label file, one label per line.
void write_frame_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_frame_labels(const std::string& path);

/// Lattice text: "#nodes N t_0 ... t_{N-1}", then one
/// "start end LABEL log_score" line per edge, scores as %.17g, and a trailing
/// " *" on the edges of the 1-best path.
std::string format_lattice(const Lattice& lattice);
Lattice parse_lattice(const std::string& text);
void write_lattice(const std::string& path, const Lattice& lattice);
Lattice read_lattice(const std::string& path);

std::vector<std::string> read_lines(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace segscribe::io
