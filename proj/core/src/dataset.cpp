#include "pseudopilot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pseudopilot/errors.hpp"
#include "pseudopilot/rng.hpp"

namespace pseudopilot {

namespace {

void check_sample(const Sample& s, int classes, std::size_t input_dim, const char* split) {
  if (s.x.size() != input_dim)
    throw ValidationError(std::string("bundle: ") + split + " sample has wrong dimension");
  if (s.true_label && (*s.true_label < 0 || *s.true_label >= classes))
    throw ValidationError(std::string("bundle: ") + split + " sample has class id " +
                          std::to_string(*s.true_label) + " >= K=" + std::to_string(classes));
  if (s.pseudo_label.has_value() != s.pseudo_confidence.has_value())
    throw ValidationError(std::string("bundle: ") + split +
                          " sample has pseudo label/confidence mismatch");
}

}  // namespace

DatasetBundle::DatasetBundle(std::vector<Sample> source, std::vector<Sample> target_labeled,
                             std::vector<Sample> target_unlabeled,
                             std::vector<int> hidden_labels, int classes,
                             std::size_t input_dim)
    : source_(std::move(source)),
      target_labeled_(std::move(target_labeled)),
      target_unlabeled_(std::move(target_unlabeled)),
      hidden_labels_(std::move(hidden_labels)),
      classes_(classes),
      input_dim_(input_dim) {
  if (classes_ < 2) throw ValidationError("bundle: need at least 2 classes");
  if (hidden_labels_.size() != target_unlabeled_.size())
    throw ValidationError("bundle: hidden labels do not match the unlabeled split");
  std::vector<std::size_t> per_class(static_cast<std::size_t>(classes_), 0);
  for (const auto& s : source_) {
    check_sample(s, classes_, input_dim_, "source");
    if (!s.true_label) throw ValidationError("bundle: unlabeled source sample");
  }
  for (const auto& s : target_labeled_) {
    check_sample(s, classes_, input_dim_, "target-labeled");
    if (!s.true_label) throw ValidationError("bundle: unlabeled sample in labeled target split");
    ++per_class[static_cast<std::size_t>(*s.true_label)];
  }
  for (std::size_t j = 0; j < per_class.size(); ++j)
    if (per_class[j] == 0)
      throw ValidationError("bundle: labeled target split has no sample of class " +
                            std::to_string(j));
  for (const auto& s : target_unlabeled_) check_sample(s, classes_, input_dim_, "unlabeled");
  for (int y : hidden_labels_)
    if (y < 0 || y >= classes_)
      throw ValidationError("bundle: hidden label " + std::to_string(y) +
                            " >= K=" + std::to_string(classes_));
}

const std::vector<int>& DatasetBundle::hidden_labels() const {
  ++hidden_label_reads_;
  return hidden_labels_;
}

bool DatasetBundle::operator==(const DatasetBundle& o) const {
  return source_ == o.source_ && target_labeled_ == o.target_labeled_ &&
         target_unlabeled_ == o.target_unlabeled_ && hidden_labels_ == o.hidden_labels_ &&
         classes_ == o.classes_ && input_dim_ == o.input_dim_;
}

std::pair<std::vector<Sample>, std::vector<Sample>> kshot_split(
    const std::vector<Sample>& target_pool, std::size_t k, std::uint64_t seed,
    std::vector<int>* hidden_labels_out) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < target_pool.size(); ++i) {
    if (!target_pool[i].true_label)
      throw ValidationError("kshot_split: pool sample " + std::to_string(i) + " has no label");
    by_class[*target_pool[i].true_label].push_back(i);
  }
  for (const auto& [cls, members] : by_class)
    if (members.size() < k + 1)
      throw ValidationError("kshot_split: class " + std::to_string(cls) + " has only " +
                            std::to_string(members.size()) + " samples, need >= " +
                            std::to_string(k + 1));
  Rng rng(seed);
  std::vector<bool> labeled(target_pool.size(), false);
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    for (std::size_t i = 0; i < k; ++i) labeled[members[i]] = true;
  }
  std::vector<Sample> few_shot;
  std::vector<Sample> unlabeled;
  std::vector<int> hidden;
  for (std::size_t i = 0; i < target_pool.size(); ++i) {
    if (labeled[i]) {
      few_shot.push_back(target_pool[i]);
    } else {
      Sample s = target_pool[i];
      hidden.push_back(*s.true_label);
      s.true_label.reset();
      unlabeled.push_back(std::move(s));
    }
  }
  if (hidden_labels_out) *hidden_labels_out = std::move(hidden);
  return {std::move(few_shot), std::move(unlabeled)};
}

DatasetBundle make_shifted_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw ValidationError("make_shifted_blobs: need K >= 2");
  if (spec.input_dim < 2) throw ValidationError("make_shifted_blobs: need input_dim >= 2");
  if (spec.n_source_per_class < 1 || spec.k_shot < 1 || spec.n_unlabeled_per_class < 1)
    throw ValidationError("make_shifted_blobs: all counts must be >= 1");

  const std::size_t k = static_cast<std::size_t>(spec.classes);
  const double radius =
      spec.min_separation * spec.sigma / (2.0 * std::sin(M_PI / static_cast<double>(k)));
  std::vector<std::vector<double>> source_centers(k), target_centers(k);
  const double ca = std::cos(spec.rotation_angle);
  const double sa = std::sin(spec.rotation_angle);
  for (std::size_t j = 0; j < k; ++j) {
    const double phase = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(k);
    const double cx = radius * std::cos(phase);
    const double cy = radius * std::sin(phase);
    source_centers[j] = {cx, cy};
    target_centers[j] = {ca * cx - sa * cy + spec.shift_magnitude, sa * cx + ca * cy};
  }

  Rng rng(spec.seed);
  auto draw = [&](const std::vector<double>& center, Domain domain, int label) {
    Sample s;
    s.domain = domain;
    s.true_label = label;
    s.x.resize(spec.input_dim);
    for (std::size_t d = 0; d < spec.input_dim; ++d) {
      const double mean = d < 2 ? center[d] : 0.0;
      s.x[d] = mean + spec.sigma * rng.normal();
    }
    return s;
  };

  std::vector<Sample> source;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < spec.n_source_per_class; ++i)
      source.push_back(draw(source_centers[j], Domain::kSource, static_cast<int>(j)));

  std::vector<Sample> target_pool;
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < spec.k_shot + spec.n_unlabeled_per_class; ++i)
      target_pool.push_back(draw(target_centers[j], Domain::kTarget, static_cast<int>(j)));

  std::vector<int> hidden;
  auto [few_shot, unlabeled] = kshot_split(target_pool, spec.k_shot, rng.next_u64(), &hidden);
  return DatasetBundle(std::move(source), std::move(few_shot), std::move(unlabeled),
                       std::move(hidden), spec.classes, spec.input_dim);
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_sample_line(std::ostream& os, const char* split, std::optional<int> label,
                       const std::vector<double>& x) {
  os << split << ',' << (label ? std::to_string(*label) : "?");
  for (double v : x) os << ',' << format_double(v);
  os << '\n';
}

}  // namespace

void save_bundle(const DatasetBundle& b, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ParseError("save_bundle: cannot open '" + path + "' for writing");
  os << "pseudopilot-data v1 K=" << b.classes() << " dim=" << b.input_dim() << '\n';
  for (const auto& s : b.source()) write_sample_line(os, "source", s.true_label, s.x);
  for (const auto& s : b.target_labeled()) write_sample_line(os, "target", s.true_label, s.x);
  const auto& hidden = b.hidden_labels();
  for (std::size_t i = 0; i < b.target_unlabeled().size(); ++i)
    write_sample_line(os, "unlabeled", hidden[i], b.target_unlabeled()[i].x);
  if (!os) throw ParseError("save_bundle: write to '" + path + "' failed");
}

DatasetBundle load_bundle(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("load_bundle: cannot open '" + path + "'");
  std::string header;
  if (!std::getline(is, header)) throw ParseError("load_bundle: empty file '" + path + "'");
  int classes = 0;
  unsigned long dim_raw = 0;
  if (std::sscanf(header.c_str(), "pseudopilot-data v1 K=%d dim=%lu", &classes, &dim_raw) != 2)
    throw ParseError("load_bundle: bad header '" + header + "'");
  const std::size_t input_dim = dim_raw;

  std::vector<Sample> source, target_labeled, target_unlabeled;
  std::vector<int> hidden;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string split, label_field;
    if (!std::getline(ss, split, ',') || !std::getline(ss, label_field, ','))
      throw ParseError("load_bundle: line " + std::to_string(line_no) + ": malformed record");
    std::optional<int> label;
    if (label_field != "?") {
      try {
        label = std::stoi(label_field);
      } catch (const std::exception&) {
        throw ParseError("load_bundle: line " + std::to_string(line_no) + ": bad label '" +
                         label_field + "'");
      }
    }
    Sample s;
    std::string field;
    while (std::getline(ss, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0')
        throw ParseError("load_bundle: line " + std::to_string(line_no) +
                         ": bad coordinate '" + field + "'");
      s.x.push_back(v);
    }
    if (s.x.size() != input_dim)
      throw ParseError("load_bundle: line " + std::to_string(line_no) + ": expected " +
                       std::to_string(input_dim) + " coordinates, got " +
                       std::to_string(s.x.size()));
    if (split == "source") {
      if (!label) throw ParseError("load_bundle: line " + std::to_string(line_no) +
                                   ": source record without label");
      s.domain = Domain::kSource;
      s.true_label = label;
      source.push_back(std::move(s));
    } else if (split == "target") {
      if (!label) throw ParseError("load_bundle: line " + std::to_string(line_no) +
                                   ": target record without label");
      s.domain = Domain::kTarget;
      s.true_label = label;
      target_labeled.push_back(std::move(s));
    } else if (split == "unlabeled") {
      if (!label) throw ParseError("load_bundle: line " + std::to_string(line_no) +
                                   ": unlabeled record without hidden label");
      s.domain = Domain::kTarget;
      hidden.push_back(*label);
      target_unlabeled.push_back(std::move(s));
    } else {
      throw ParseError("load_bundle: line " + std::to_string(line_no) + ": unknown split '" +
                       split + "'");
    }
  }
  try {
    return DatasetBundle(std::move(source), std::move(target_labeled),
                         std::move(target_unlabeled), std::move(hidden), classes, input_dim);
  } catch (const ValidationError& e) {
    throw ParseError("load_bundle: '" + path + "': " + e.what());
  }
}

Tensor stack_inputs(const std::vector<Sample>& samples) {
  if (samples.empty()) return Tensor();
  Tensor out(samples.size(), samples.front().x.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != out.cols())
      throw ValidationError("stack_inputs: inconsistent sample dimensions");
    for (std::size_t d = 0; d < out.cols(); ++d) out.at(i, d) = samples[i].x[d];
  }
  return out;
}

}  // namespace pseudopilot
