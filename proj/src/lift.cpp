#include "semir/lift.hpp"

#include <deque>
#include <fstream>
#include <map>

#include "semir/binary_io.hpp"
#include "semir/error.hpp"

namespace semir {

namespace {

void check_counts(const GraphMinor &minor, std::span<const std::uint16_t> predictions) {
  if (predictions.size() != minor.nodes.size()) {
    throw InvalidParams("expected " + std::to_string(minor.nodes.size()) + " supernode predictions, got " +
                        std::to_string(predictions.size()));
  }
}

LabelMap blank(const GraphMinor &minor, std::uint16_t background) {
  LabelMap out(minor.dims);
  std::fill(out.labels.begin(), out.labels.end(), background);
  return out;
}

} // namespace

LabelMap lift(const GraphMinor &minor, std::span<const std::uint16_t> predictions, std::uint16_t background) {
  check_counts(minor, predictions);
  if (minor.membership.size() != minor.dims.voxels()) {
    throw ContractViolation("membership does not cover the volume");
  }
  auto out = blank(minor, background);
  for (std::size_t v = 0; v < minor.membership.size(); ++v) {
    const auto id = minor.membership[v];
    if (id != kDeleted) {
      out.labels[v] = predictions[id];
    }
  }
  return out;
}

LabelMap lift_tensor_walk(const GraphMinor &minor, const ExpandedTensor &tensor,
                          std::span<const std::uint16_t> predictions, std::uint16_t background) {
  check_counts(minor, predictions);
  if (!tensor.voxel_dims().same_grid(minor.dims)) {
    throw InvalidParams("tensor and minor describe different grids");
  }
  const Connectivity conn(minor.connectivity);
  const auto &dims = minor.dims;
  const auto merged = flag_bit(Flag::Merged);
  const auto deleted = flag_bit(Flag::NodeDeleted);
  auto out = blank(minor, background);
  std::vector<char> done(dims.voxels(), 0);
  for (const auto &node : minor.nodes) {
    const auto start = node.canonical;
    if (!dims.contains(start) || tensor.test(tensor.index({2 * start[0], 2 * start[1], 2 * start[2]}), deleted)) {
      throw ContractViolation("supernode " + std::to_string(node.id) + " has no live canonical voxel");
    }
    std::deque<Coord> queue{start};
    done[dims.voxel_index(start)] = 1;
    while (!queue.empty()) {
      const auto p = queue.front();
      queue.pop_front();
      out.labels[dims.voxel_index(p)] = predictions[node.id];
      for (const auto &d : conn.offsets()) {
        const Coord q{p[0] + d[0], p[1] + d[1], p[2] + d[2]};
        if (!dims.contains(q) || done[dims.voxel_index(q)]) {
          continue;
        }
        if (!tensor.test(tensor.index({2 * q[0], 2 * q[1], 2 * q[2]}), merged) || !has_contraction(tensor, p, d)) {
          continue;
        }
        done[dims.voxel_index(q)] = 1;
        queue.push_back(q);
      }
    }
  }
  return out;
}

double voxel_dice(const LabelMap &pred, const LabelMap &gt, std::uint16_t target) {
  if (!pred.dims.same_grid(gt.dims) || pred.labels.size() != gt.labels.size()) {
    throw InvalidParams("voxel_dice: prediction and ground truth differ in shape");
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool x = pred.labels[i] == target;
    const bool y = gt.labels[i] == target;
    a += x;
    b += y;
    both += x && y;
  }
  return a + b == 0 ? 1.0 : 2.0 * double(both) / double(a + b);
}

std::vector<std::uint16_t> majority_labels(const GraphMinor &minor, const LabelMap &labels) {
  if (!labels.dims.same_grid(minor.dims) || labels.labels.size() != minor.membership.size()) {
    throw InvalidParams("label map does not match the minor's grid");
  }
  std::vector<std::map<std::uint16_t, std::size_t>> votes(minor.nodes.size());
  for (std::size_t v = 0; v < minor.membership.size(); ++v) {
    if (minor.membership[v] != kDeleted) {
      ++votes[minor.membership[v]][labels.labels[v]];
    }
  }
  std::vector<std::uint16_t> out(minor.nodes.size(), 0);
  for (std::size_t u = 0; u < votes.size(); ++u) {
    std::size_t best = 0;
    for (const auto &[label, count] : votes[u]) { // ascending label: strict > keeps the smaller on ties
      if (count > best) {
        best = count;
        out[u] = label;
      }
    }
  }
  return out;
}

void write_predictions(const std::filesystem::path &path, const NodePredictions &pred) {
  if (pred.classes == 0 || pred.classes > 256) {
    throw InvalidParams("class count must be in [1, 256]");
  }
  for (auto c : pred.labels) {
    if (c >= pred.classes) {
      throw InvalidParams("prediction " + std::to_string(c) + " >= class count " + std::to_string(pred.classes));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  binary::put_magic(os, "SPRD");
  binary::put<std::uint32_t>(os, 1);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(pred.labels.size()));
  binary::put<std::uint32_t>(os, pred.classes);
  for (auto c : pred.labels) {
    binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(c));
  }
  if (!os) {
    throw FormatError("write failed for " + path.string());
  }
}

NodePredictions read_predictions(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path.string());
  }
  binary::expect_magic(is, "SPRD");
  binary::expect_version(is, 1);
  const auto n = binary::get<std::uint32_t>(is);
  NodePredictions out;
  out.classes = binary::get<std::uint32_t>(is);
  if (out.classes == 0 || out.classes > 256) {
    throw FormatError("class count out of range in " + path.string());
  }
  out.labels.resize(n);
  for (auto &c : out.labels) {
    c = binary::get<std::uint8_t>(is);
    if (c >= out.classes) {
      throw FormatError("prediction exceeds class count in " + path.string());
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes in " + path.string());
  }
  return out;
}

} // namespace semir
