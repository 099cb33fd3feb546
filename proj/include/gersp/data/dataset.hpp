// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/core/png_io.hpp"
#include "gersp/core/tensor.hpp"

namespace gersp {

using Image = Tensor<float>;  // HxWx3, values in [0,1]

/// Per-channel standardization constants applied when images are assembled
/// into batches (after augmentation).
struct ChannelStats {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};
};

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  void validate() const {
    if (images.size() != labels.size())
      throw ConfigError("labeled dataset: images and labels differ in length");
    for (int l : labels)
      if (l < 0 || l >= n_classes())
        throw ConfigError("labeled dataset: label out of range");
    for (const auto& img : images)
      if (img.rank() != 3 || img.dim(2) != 3)
        throw ConfigError("labeled dataset: images must be HxWx3");
  }
};

struct UnlabeledDataset {
  std::vector<Image> images;

  std::size_t size() const { return images.size(); }

  void validate() const {
    if (images.empty()) throw ConfigError("unlabeled dataset: empty");
    for (const auto& img : images)
      if (img.rank() != 3 || img.dim(2) != 3)
        throw ConfigError("unlabeled dataset: images must be HxWx3");
  }
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_entries(
    const std::filesystem::path& dir, bool dirs_only) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (!name.empty() && name[0] == '.') continue;
    if (dirs_only == e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::filesystem::path> sorted_files_recursive(
    const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    const std::string name = e.path().filename().string();
    if (!name.empty() && name[0] == '.') continue;
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Loads a class-per-subdirectory image tree. Subdirectory names sorted
/// lexicographically define label ids 0..K-1. Every file must decode; an
/// empty class directory is an error.
inline LabeledDataset load_labeled_dataset(const std::string& root_dir) {
  namespace fs = std::filesystem;
  const fs::path root(root_dir);
  if (!fs::is_directory(root))
    throw IoError("dataset directory not found: " + root_dir);

  LabeledDataset ds;
  const auto class_dirs = detail::sorted_entries(root, /*dirs_only=*/true);
  if (class_dirs.empty())
    throw IoError("no class subdirectories in: " + root_dir);
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    const auto files = detail::sorted_entries(class_dirs[c], /*dirs_only=*/false);
    if (files.empty())
      throw IoError("empty class directory: " + class_dirs[c].string());
    ds.class_names.push_back(class_dirs[c].filename().string());
    for (const auto& f : files) {
      ds.images.push_back(read_png(f.string()));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  ds.validate();
  return ds;
}

/// Loads every image file under root_dir (recursive), in sorted-path order.
inline UnlabeledDataset load_unlabeled_dataset(const std::string& root_dir) {
  namespace fs = std::filesystem;
  const fs::path root(root_dir);
  if (!fs::is_directory(root))
    throw IoError("dataset directory not found: " + root_dir);

  UnlabeledDataset ds;
  for (const auto& f : detail::sorted_files_recursive(root))
    ds.images.push_back(read_png(f.string()));
  if (ds.images.empty())
    throw IoError("no images found under: " + root_dir);
  ds.validate();
  return ds;
}

}  // namespace gersp
