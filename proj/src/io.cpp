#include "segscribe/io.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "segscribe/error.hpp"

namespace segscribe::io {

namespace {

constexpr char kDescriptorMagic[4] = {'S', 'G', 'D', 'S'};

template <typename T>
void write_le(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw DataError("unexpected end of binary file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
float read_f32(std::istream& in) { return read_le<float>(in); }
double read_f64(std::istream& in) { return read_le<double>(in); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  if (n > (1u << 24)) throw DataError("string field too long");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError("unexpected end of binary file");
  return s;
}

void write_descriptors(const std::string& path, const FrameSequence& seq) {
  auto out = open_out(path, true);
  out.write(kDescriptorMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(seq.num_frames()));
  write_u32(out, static_cast<std::uint32_t>(seq.dim()));
  write_f32(out, static_cast<float>(seq.frame_rate()));
  const Matrix& f = seq.frames();
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    for (Eigen::Index d = 0; d < f.cols(); ++d) write_f32(out, static_cast<float>(f(t, d)));
  }
  if (!out) throw DataError("write failed for " + path);
}

FrameSequence read_descriptors(const std::string& path, const std::string& source_id) {
  auto in = open_in(path, true);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDescriptorMagic, 4) != 0) {
    throw DataError(path + ": not a descriptor file");
  }
  const auto T = read_u32(in);
  const auto D = read_u32(in);
  const float rate = read_f32(in);
  if (T == 0 || D == 0 || static_cast<std::uint64_t>(T) * D > (1ull << 30)) {
    throw DataError(path + ": bad descriptor dimensions");
  }
  Matrix frames(T, D);
  for (std::uint32_t t = 0; t < T; ++t) {
    for (std::uint32_t d = 0; d < D; ++d) frames(t, d) = read_f32(in);
  }
  return {std::move(frames), rate, source_id};
}

std::string format_annotation(const PeakAnnotation& ann) {
  std::ostringstream os;
  os << ann.word() << '\t' << ann.signer() << '\t' << ann.num_frames() << '\t';
  for (std::size_t i = 0; i < ann.peaks().size(); ++i) {
    const Peak& p = ann.peaks()[i];
    if (i) os << ' ';
    os << p.frame << ':' << static_cast<char>('A' + p.letter);
    if (p.is_digraph()) os << static_cast<char>('A' + p.second);
    if (p.noncanonical || p.undetected) {
      os << ',';
      if (p.noncanonical) os << '+';
      if (p.undetected) os << '*';
    }
  }
  return os.str();
}

PeakAnnotation parse_annotation(const std::string& line) {
  const auto fields = split(line, '\t');
  if (fields.size() != 4) throw DataError("annotation record needs 4 tab-separated fields");
  int T = 0;
  try {
    T = std::stoi(fields[2]);
  } catch (const std::exception&) {
    throw DataError("bad frame count in annotation: " + fields[2]);
  }
  std::vector<Peak> peaks;
  std::stringstream ss(fields[3]);
  std::string tok;
  while (ss >> tok) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw DataError("bad peak token: " + tok);
    Peak p;
    try {
      p.frame = std::stoi(tok.substr(0, colon));
    } catch (const std::exception&) {
      throw DataError("bad peak frame: " + tok);
    }
    std::string rest = tok.substr(colon + 1);
    std::string flags;
    if (auto comma = rest.find(','); comma != std::string::npos) {
      flags = rest.substr(comma + 1);
      rest = rest.substr(0, comma);
    }
    if (rest.empty() || rest.size() > 2) throw DataError("bad peak label: " + tok);
    for (char c : rest) {
      if (c < 'A' || c > 'Z') throw DataError("bad peak label: " + tok);
    }
    p.letter = rest[0] - 'A';
    if (rest.size() == 2) p.second = rest[1] - 'A';
    for (char c : flags) {
      if (c == '+') {
        p.noncanonical = true;
      } else if (c == '*') {
        p.undetected = true;
      } else {
        throw DataError("unknown peak flag in " + tok);
      }
    }
    peaks.push_back(p);
  }
  return {fields[0], fields[1], T, std::move(peaks)};
}

void write_annotations(const std::string& path, const std::vector<PeakAnnotation>& anns) {
  auto out = open_out(path);
  for (const auto& a : anns) out << format_annotation(a) << '\n';
}

std::vector<PeakAnnotation> read_annotations(const std::string& path) {
  std::vector<PeakAnnotation> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(parse_annotation(line));
  }
  return out;
}

std::string format_labels(const std::vector<Label>& labels) {
  static const LabelAlphabet alphabet;
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) out += ' ';
    out += alphabet.symbol(labels[i]);
  }
  return out;
}

std::vector<Label> parse_labels(const std::string& line) {
  static const LabelAlphabet alphabet;
  std::vector<Label> out;
  std::stringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(alphabet.label(tok));
  return out;
}

void write_label_sequences(const std::string& path, const std::vector<std::vector<Label>>& seqs) {
  auto out = open_out(path);
  for (const auto& s : seqs) out << format_labels(s) << '\n';
}

std::vector<std::vector<Label>> read_label_sequences(const std::string& path) {
  std::vector<std::vector<Label>> out;
  for (const auto& line : read_lines(path)) out.push_back(parse_labels(line));
  return out;
}

const char* role_name(FoldRole role) {
  switch (role) {
    case FoldRole::kTrain:
      return "train";
    case FoldRole::kDev:
      return "dev";
    case FoldRole::kTest:
      return "test";
  }
  return "?";
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  auto out = open_out(path);
  for (const auto& e : entries) {
    out << e.utterance << '\t' << e.fold << '\t' << role_name(e.role) << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::vector<ManifestEntry> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw DataError("bad manifest line: " + line);
    ManifestEntry e;
    e.utterance = f[0];
    try {
      e.fold = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw DataError("bad manifest fold: " + line);
    }
    if (f[2] == "train") {
      e.role = FoldRole::kTrain;
    } else if (f[2] == "dev") {
      e.role = FoldRole::kDev;
    } else if (f[2] == "test") {
      e.role = FoldRole::kTest;
    } else {
      throw DataError("bad manifest role: " + f[2]);
    }
    out.push_back(e);
  }
  return out;
}

void write_frame_labels(const std::string& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  for (int l : labels) out << l << '\n';
}

std::vector<int> read_frame_labels(const std::string& path) {
  std::vector<int> out;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    try {
      out.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw DataError("bad frame label line: " + line);
    }
  }
  return out;
}

std::string format_lattice(const Lattice& lattice) {
  std::string out = "#nodes " + std::to_string(lattice.nodes().size());
  for (int t : lattice.nodes()) out += ' ' + std::to_string(t);
  out += '\n';
  std::vector<char> best(lattice.edges().size(), 0);
  for (int e : lattice.one_best()) best[static_cast<std::size_t>(e)] = 1;
  char buf[64];
  for (std::size_t e = 0; e < lattice.edges().size(); ++e) {
    const auto& ed = lattice.edges()[e];
    std::snprintf(buf, sizeof buf, "%.17g", ed.score);
    out += std::to_string(ed.start) + ' ' + std::to_string(ed.end) + ' ' + format_labels({ed.label}) + ' ' + buf;
    if (best[e]) out += " *";
    out += '\n';
  }
  return out;
}

Lattice parse_lattice(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  std::vector<int> nodes;
  std::vector<LatticeEdge> edges;
  std::vector<int> one_best;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    if (!header) {
      std::string tag;
      std::size_t n = 0;
      if (!(ls >> tag >> n) || tag != "#nodes") throw DataError("lattice lacks the #nodes header");
      nodes.resize(n);
      for (auto& t : nodes) {
        if (!(ls >> t)) throw DataError("lattice node list is short");
      }
      header = true;
      continue;
    }
    LatticeEdge e;
    std::string label, score, mark;
    if (!(ls >> e.start >> e.end >> label >> score)) throw DataError("malformed lattice edge: " + line);
    e.label = parse_labels(label).at(0);
    try {
      e.score = std::stod(score);
    } catch (const std::exception&) {
      throw DataError("malformed lattice score: " + score);
    }
    if (ls >> mark) {
      if (mark != "*") throw DataError("unexpected lattice token: " + mark);
      one_best.push_back(static_cast<int>(edges.size()));
    }
    edges.push_back(e);
  }
  if (!header) throw DataError("empty lattice");
  std::stable_sort(one_best.begin(), one_best.end(), [&](int a, int b) {
    return edges[static_cast<std::size_t>(a)].start < edges[static_cast<std::size_t>(b)].start;
  });
  return Lattice(std::move(nodes), std::move(edges), std::move(one_best));
}

void write_lattice(const std::string& path, const Lattice& lattice) { write_text(path, format_lattice(lattice)); }

Lattice read_lattice(const std::string& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lattice(ss.str());
}

std::vector<std::string> read_lines(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace segscribe::io
