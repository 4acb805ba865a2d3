#include "segscribe/image.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "segscribe/error.hpp"

namespace segscribe {

double Image::gray(int x, int y) const {
  if (channels == 1) return at(x, y);
  return 0.299 * at(x, y, 0) + 0.587 * at(x, y, 1) + 0.114 * at(x, y, 2);
}

long BinaryMask::count() const {
  return std::accumulate(bits.begin(), bits.end(), 0L);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

std::vector<int> component_labels(const BinaryMask& mask, std::vector<long>& sizes) {
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const auto idx = static_cast<std::size_t>(y * mask.width + x);
      if (!mask.bits[idx] || label[idx] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      stack.push_back({x, y});
      label[idx] = id;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        ++sizes.back();
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= mask.width || ny[k] >= mask.height) continue;
          const auto n = static_cast<std::size_t>(ny[k] * mask.width + nx[k]);
          if (mask.bits[n] && label[n] < 0) {
            label[n] = id;
            stack.push_back({nx[k], ny[k]});
          }
        }
      }
    }
  }
  return label;
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  const std::string magic = next_token(in);
  int channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw DataError(path + ": only binary PGM/PPM are supported");
  }
  int w, h, maxval;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw DataError(path + ": bad PNM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError(path + ": unsupported PNM geometry");
  Image img(w, h, channels);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size()))) {
    throw DataError(path + ": truncated PNM data");
  }
  return img;
}

void write_pnm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

BinaryMask largest_component(const BinaryMask& mask) {
  std::vector<long> sizes;
  const auto label = component_labels(mask, sizes);
  BinaryMask out(mask.width, mask.height);
  if (sizes.empty()) return out;
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < label.size(); ++i) out.bits[i] = label[i] == best ? 1 : 0;
  return out;
}

int count_components(const BinaryMask& mask) {
  std::vector<long> sizes;
  component_labels(mask, sizes);
  return static_cast<int>(sizes.size());
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  BinaryMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u >= 0 && v >= 0 && u < mask.width && v < mask.height) out.set(u, v, true);
        }
      }
    }
  }
  return out;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) throw UsageError("mask sizes differ");
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace segscribe
