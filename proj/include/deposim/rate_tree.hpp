#pragma once

#include <cstddef>
#include <vector>

namespace deposim {

// Complete binary sum tree over nonnegative leaf rates. Internal nodes are always
// recomputed from their children, so the root equals the tree-ordered leaf sum exactly.
class RateTree {
 public:
  explicit RateTree(std::size_t n = 0) { resize(n); }

  void resize(std::size_t n) {
    n_ = n;
    cap_ = 1;
    while (cap_ < n) cap_ <<= 1;
    node_.assign(2 * cap_, 0.0);
  }

  std::size_t size() const { return n_; }
  double total() const { return node_[1]; }
  double get(std::size_t i) const { return node_[cap_ + i]; }

  void set(std::size_t i, double rate) {
    std::size_t k = cap_ + i;
    node_[k] = rate;
    for (k >>= 1; k >= 1; k >>= 1) node_[k] = node_[2 * k] + node_[2 * k + 1];
  }

  // Writes leaves without touching ancestors; follow with rebuild().
  void set_leaf(std::size_t i, double rate) { node_[cap_ + i] = rate; }

  void rebuild() {
    for (std::size_t k = cap_ - 1; k >= 1; --k) node_[k] = node_[2 * k] + node_[2 * k + 1];
  }

  // Leaf index for a target x in [0, total()); never returns a zero-rate leaf when total() > 0.
  std::size_t sample(double x) const {
    std::size_t k = 1;
    while (k < cap_) {
      const double left = node_[2 * k];
      const double right = node_[2 * k + 1];
      if ((x < left && left > 0) || right <= 0) {
        k = 2 * k;
      } else {
        x -= left;
        k = 2 * k + 1;
      }
    }
    return k - cap_;
  }

 private:
  std::size_t n_ = 0, cap_ = 1;
  std::vector<double> node_;
};

}  // namespace deposim
