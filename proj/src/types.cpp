#include "segscribe/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "segscribe/error.hpp"

namespace segscribe {

FrameSequence::FrameSequence(Matrix frames, double frame_rate, std::string source_id)
    : frames_(std::move(frames)), frame_rate_(frame_rate), source_id_(std::move(source_id)) {
  if (frames_.rows() < 1) throw DataError("frame sequence must have at least one frame");
  if (!frames_.allFinite()) throw DataError("frame sequence contains non-finite values");
  if (!(frame_rate_ > 0.0)) throw DataError("frame rate must be positive");
}

PeakAnnotation::PeakAnnotation(std::string word, std::string signer, int num_frames,
                               std::vector<Peak> peaks)
    : word_(std::move(word)), signer_(std::move(signer)), num_frames_(num_frames),
      peaks_(std::move(peaks)) {
  if (num_frames_ < 1) throw DataError("annotation needs a positive frame count");
  std::size_t letters = 0;
  for (std::size_t i = 0; i < peaks_.size(); ++i) {
    const Peak& p = peaks_[i];
    if (p.frame < 0 || p.frame >= num_frames_) throw DataError("peak out of range");
    if (i > 0 && p.frame <= peaks_[i - 1].frame) {
      throw DataError("peak frames must be strictly increasing");
    }
    if (!is_letter(p.letter) || (p.second >= 0 && !is_letter(p.second))) {
      throw DataError("peak label is not a letter");
    }
    letters += p.is_digraph() ? 2 : 1;
  }
  if (letters != word_.size()) {
    throw DataError("annotation of '" + word_ + "' has " + std::to_string(letters) +
                    " peak letters");
  }
}

bool PeakAnnotation::has_digraph() const {
  return std::any_of(peaks_.begin(), peaks_.end(), [](const Peak& p) { return p.is_digraph(); });
}

LabeledSegmentation::LabeledSegmentation(std::vector<Label> labels, std::vector<int> boundaries)
    : labels_(std::move(labels)), boundaries_(std::move(boundaries)) {
  if (labels_.empty()) throw DataError("segmentation must have at least one segment");
  if (boundaries_.size() != labels_.size() + 1) {
    throw DataError("segmentation needs k+1 boundaries for k labels");
  }
  if (boundaries_.front() != 0) throw DataError("segmentation must start at 0");
  for (std::size_t i = 1; i < boundaries_.size(); ++i) {
    if (boundaries_[i] <= boundaries_[i - 1]) {
      throw DataError("segmentation boundaries must be strictly increasing");
    }
  }
  for (Label l : labels_) {
    if (l < 0 || l >= kNumLabels) throw DataError("segmentation label out of range");
  }
}

std::vector<Label> LabeledSegmentation::frame_labels() const {
  std::vector<Label> out(static_cast<std::size_t>(num_frames()));
  for (int i = 0; i < size(); ++i) {
    std::fill(out.begin() + start(i), out.begin() + end(i), labels_[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<Label> LabeledSegmentation::letters() const {
  std::vector<Label> out;
  for (Label l : labels_) {
    if (is_letter(l)) out.push_back(l);
  }
  return out;
}

PosteriorStream::PosteriorStream(Matrix probs, std::string head)
    : probs_(std::move(probs)), head_(std::move(head)) {
  for (Eigen::Index t = 0; t < probs_.rows(); ++t) {
    if ((probs_.row(t).array() < 0.0).any() || std::abs(probs_.row(t).sum() - 1.0) > 1e-6) {
      throw DataError("posterior row " + std::to_string(t) + " is not a distribution");
    }
  }
}

Lattice::Lattice(std::vector<int> nodes, std::vector<LatticeEdge> edges, std::vector<int> one_best)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), one_best_(std::move(one_best)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  if (nodes_.size() < 2 || nodes_.front() != 0) throw DataError("lattice needs nodes 0 and T");
  auto has_node = [&](int t) { return std::binary_search(nodes_.begin(), nodes_.end(), t); };
  for (const auto& e : edges_) {
    if (e.start >= e.end || !has_node(e.start) || !has_node(e.end)) {
      throw DataError("lattice edge endpoints invalid");
    }
  }
  // Reachability from 0 to T in time order.
  const int T = nodes_.back();
  std::vector<char> reach(static_cast<std::size_t>(T) + 1, 0);
  reach[0] = 1;
  std::vector<int> order(edges_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return edges_[a].start < edges_[b].start; });
  for (int i : order) {
    if (reach[static_cast<std::size_t>(edges_[i].start)]) reach[edges_[i].end] = 1;
  }
  if (!reach[static_cast<std::size_t>(T)]) throw DataError("lattice has no complete path");
  int t = 0;
  for (int i : one_best_) {
    if (i < 0 || i >= static_cast<int>(edges_.size()) || edges_[i].start != t) {
      throw DataError("lattice 1-best is not a path");
    }
    t = edges_[i].end;
  }
  if (t != T) throw DataError("lattice 1-best does not reach T");
}

LabeledSegmentation Lattice::one_best_segmentation() const {
  std::vector<Label> labels;
  std::vector<int> bounds{0};
  for (int i : one_best_) {
    labels.push_back(edges_[i].label);
    bounds.push_back(edges_[i].end);
  }
  return {labels, bounds};
}

Lattice Lattice::from_paths(const std::vector<LabeledSegmentation>& paths,
                            const std::vector<std::vector<double>>& edge_scores) {
  if (paths.empty()) throw DataError("cannot build a lattice from zero paths");
  std::map<std::tuple<int, int, Label>, int> index;
  std::vector<LatticeEdge> edges;
  std::vector<int> nodes;
  std::vector<int> one_best;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (int i = 0; i < path.size(); ++i) {
      const double score = edge_scores.empty() ? 0.0 : edge_scores[p][static_cast<std::size_t>(i)];
      auto key = std::make_tuple(path.start(i), path.end(i), path.labels()[static_cast<std::size_t>(i)]);
      auto it = index.find(key);
      int id;
      if (it == index.end()) {
        id = static_cast<int>(edges.size());
        index.emplace(key, id);
        edges.push_back({path.start(i), path.end(i), std::get<2>(key), score});
        nodes.push_back(path.start(i));
        nodes.push_back(path.end(i));
      } else {
        id = it->second;
        edges[static_cast<std::size_t>(id)].score = std::max(edges[static_cast<std::size_t>(id)].score, score);
      }
      if (p == 0) one_best.push_back(id);
    }
  }
  return Lattice(std::move(nodes), std::move(edges), std::move(one_best));
}

}  // namespace segscribe
