#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node. Primitives applied to tensors
// that require gradients record their inputs and a backward closure; calling
// backward() on a scalar result walks the recorded graph in reverse
// topological order and accumulates into every requires_grad ancestor.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rose::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for shape mismatches and invalid primitive parameters.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of the values. Only valid for tensors that are not the
  /// output of a recorded primitive.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// New leaf sharing no graph history; values are copied.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  /// Reverse pass from a scalar. Leaf gradients accumulate additively.
  void backward() const;

  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer();
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Worker count used by the heavier primitives. Results never depend on it.
void set_num_threads(int threads);
int num_threads();

// ---------------------------------------------------------------------------
// Element-wise arithmetic. Binary ops broadcast numpy-style.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a / b with |b| floored at eps (sign kept, zero treated as positive).
Tensor div(const Tensor& a, const Tensor& b, double eps = 1e-12);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
/// log(max(x, eps)).
Tensor log(const Tensor& x, double eps = 1e-12);
/// sqrt(max(x, 0) + eps).
Tensor sqrt(const Tensor& x, double eps = 1e-12);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

// ---------------------------------------------------------------------------
// Reductions and shape manipulation.

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = true);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = true);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 1);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Mirror along the last axis.
Tensor hflip(const Tensor& x);

// ---------------------------------------------------------------------------
// Image primitives on N x C x H x W tensors.

/// Cross-correlation with zero padding. w is Co x Ci x k x k, bias is Co or
/// undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t pad);
/// Bilinear upsampling by an integer factor, half-pixel centers, edge clamp.
Tensor upsample_bilinear(const Tensor& x, std::size_t factor = 2);
Tensor global_avg_pool(const Tensor& x);
/// 3x3 box mean with reflection padding.
Tensor box_filter3(const Tensor& x);
/// Per-sample per-channel normalization; gamma, beta have shape C.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     double eps = 1e-5);
/// Per-channel normalization over (N, H, W) using current batch statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct SampleResult {
  Tensor values;    // N x C x H x W
  Tensor validity;  // N x 1 x H x W, 1 where the source coordinate is in [0, W-1]
};

/// out(n,c,y,x) = bilinear sample of img at column x - disp(n,0,y,x), row y.
/// Source columns are clamped to [0, W-1]; clamped samples carry no gradient
/// with respect to disp and are flagged invalid.
SampleResult sample_horizontal(const Tensor& img, const Tensor& disp);

// ---------------------------------------------------------------------------
// Spectral primitives. Complex maps are stored as N x 2C x H x W with the C
// real planes first and the C imaginary planes after them.

/// Unnormalized forward 2-D DFT of a real N x C x H x W tensor.
Tensor dft2(const Tensor& x);
/// Real part of the inverse 2-D DFT, scaled by 1 / (H W).
Tensor idft2(const Tensor& spectrum);
/// |X| per complex entry: N x 2C x H x W -> N x C x H x W.
Tensor complex_abs(const Tensor& spectrum);
/// magnitude * X / max(|X|, eps): rebuilds a spectrum from new magnitudes
/// and the phases of X.
Tensor polar_recombine(const Tensor& magnitude, const Tensor& spectrum, double eps = 1e-12);

// ---------------------------------------------------------------------------
// Stereo matching primitives.

/// vol(n,d,y,x) = <fl(:,y,x), fr(:,y,x-d)> / sqrt(C); sentinel where x-d < 0.
Tensor correlation_volume(const Tensor& fl, const Tensor& fr, std::size_t max_disp,
                          double sentinel);
/// Linear interpolation of vol along the disparity axis at disp + k for
/// k in [-radius, radius]. Bins outside the volume or holding the sentinel
/// read as 0.
Tensor lookup_disparity(const Tensor& vol, const Tensor& disp, std::size_t radius,
                        double sentinel);

// ---------------------------------------------------------------------------
// Verification.

/// max over coordinates of |analytic - central difference| / max(1, |analytic|).
double check_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                      double h = 1e-5);

}  // namespace rose::ad
