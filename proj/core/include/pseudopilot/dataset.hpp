#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

enum class Domain { kSource, kTarget };

struct Sample {
  std::vector<double> x;
  std::optional<int> true_label;
  Domain domain = Domain::kSource;
  std::optional<int> pseudo_label;
  std::optional<double> pseudo_confidence;

  bool operator==(const Sample&) const = default;
};

// The three SSDA splits. Unlabeled-target ground truth is kept out of the
// Sample records and reachable only through hidden_labels(), which counts
// every access so tests can verify that training code never consults it.
class DatasetBundle {
 public:
  DatasetBundle(std::vector<Sample> source, std::vector<Sample> target_labeled,
                std::vector<Sample> target_unlabeled, std::vector<int> hidden_labels,
                int classes, std::size_t input_dim);

  const std::vector<Sample>& source() const { return source_; }
  const std::vector<Sample>& target_labeled() const { return target_labeled_; }
  const std::vector<Sample>& target_unlabeled() const { return target_unlabeled_; }
  int classes() const { return classes_; }
  std::size_t input_dim() const { return input_dim_; }

  // Evaluation-only access to the ground truth of the unlabeled split.
  const std::vector<int>& hidden_labels() const;
  std::size_t hidden_label_reads() const { return hidden_label_reads_; }

  bool operator==(const DatasetBundle& o) const;

 private:
  std::vector<Sample> source_;
  std::vector<Sample> target_labeled_;
  std::vector<Sample> target_unlabeled_;
  std::vector<int> hidden_labels_;
  int classes_ = 0;
  std::size_t input_dim_ = 0;
  mutable std::size_t hidden_label_reads_ = 0;
};

// Synthetic domain-shifted Gaussian blobs. Source classes sit on a circle
// in the first two coordinates (unit noise, centers 6 sigma apart); the
// target domain is the same layout rotated by rotation_angle about the
// origin and translated by shift_magnitude along +x.
struct BlobSpec {
  std::uint64_t seed = 0;
  int classes = 4;
  std::size_t input_dim = 2;
  double shift_magnitude = 0.0;
  double rotation_angle = 0.0;  // radians
  std::size_t n_source_per_class = 100;
  std::size_t k_shot = 3;
  std::size_t n_unlabeled_per_class = 50;
  double sigma = 1.0;
  double min_separation = 6.0;  // in units of sigma
};

DatasetBundle make_shifted_blobs(const BlobSpec& spec);

// Seeded k-shot split of a fully labeled target pool: exactly k labeled
// samples per class, remainder unlabeled (labels moved to hidden storage).
std::pair<std::vector<Sample>, std::vector<Sample>> kshot_split(
    const std::vector<Sample>& target_pool, std::size_t k, std::uint64_t seed,
    std::vector<int>* hidden_labels_out);

// Line-oriented text format with header "pseudopilot-data v1 K=<K> dim=<d>".
void save_bundle(const DatasetBundle& bundle, const std::string& path);
DatasetBundle load_bundle(const std::string& path);

// Stacks sample inputs into a [n, input_dim] tensor.
Tensor stack_inputs(const std::vector<Sample>& samples);

}  // namespace pseudopilot
