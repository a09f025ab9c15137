#pragma once

#include <string>
#include <vector>

#include "treeslam/geometry.hpp"

namespace treeslam {

struct TreeEntry {
  int id = 0;
  Point2 position;
};

struct TreeMap {
  std::vector<TreeEntry> trees;
  std::string frame = "local";

  std::size_t size() const { return trees.size(); }
  bool empty() const { return trees.empty(); }
};

}  // namespace treeslam
