#pragma once

// Procedural chest-like radiographs with exact landmarks and annotation boxes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "geomask/labels.hpp"
#include "geomask/raster.hpp"

namespace geomask {

struct PhantomSpec {
  std::uint64_t seed = 0;
  int canvas = 64;
  double cx = 0, cy = 0;  // chest center
  double theta = 0;       // degrees
  double height = 0;      // thoracic inlet to diaphragm
  double width = 0;       // across the lungs
  LandmarkSet<double> landmarks;
  BoxList boxes;
};

struct Phantom {
  PhantomSpec spec;
  GrayImage image;
  LabelRecord record;
};

/// Phantom `index` of the corpus drawn from `seed`; independent of the others.
Phantom generate_phantom(std::uint64_t seed, std::size_t index, int canvas);
std::vector<Phantom> generate_phantoms(std::size_t count, std::uint64_t seed, int canvas);

/// Writes images/<id>.png (16-bit), labels.jsonl and manifest.csv.
void write_phantom_corpus(const std::vector<Phantom>& phantoms, const std::filesystem::path& out_dir);

std::string phantom_id(std::size_t index);

}  // namespace geomask
