#include "relsim/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <utility>

namespace relsim::ad {

namespace {

std::atomic<ParamId> next_param_id{1};
std::atomic<double> perturbation{0.0};

Tape& same_tape(Tensor a, Tensor b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ShapeError(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape();
}

// Eight interleaved partial sums so the loop vectorizes without
// reassociation flags. Summation order is fixed, so results stay
// deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    for (std::size_t q = 0; q < 8; ++q) acc[q] += a[j + q] * b[j + q];
  }
  double s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

void require_same_shape(Tensor a, Tensor b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}

}  // namespace

std::string Shape::to_string() const {
  if (rank_ == 1) return "[" + std::to_string(dims_[0]) + "]";
  if (rank_ == 2) return "[" + std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "]";
  return "[]";
}

Parameter::Parameter(std::string name_, Shape shape_)
    : Parameter(std::move(name_), shape_, std::vector<double>(shape_.size(), 0.0)) {}

Parameter::Parameter(std::string name_, Shape shape_, std::vector<double> values)
    : name(std::move(name_)), shape(shape_), value(std::move(values)), id(next_param_id++) {
  if (value.size() != shape.size()) {
    throw ShapeError("parameter " + name + ": " + std::to_string(value.size()) +
                     " values for shape " + shape.to_string());
  }
}

std::span<const double> Gradients::get(ParamId id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) return {};
  return it->second;
}

std::vector<double>& Gradients::slot(ParamId id, std::size_t n) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(n, 0.0);
  return g;
}

const Shape& Tensor::shape() const { return tape_->shape_of(id_); }
std::span<const double> Tensor::values() const { return tape_->value_of(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  auto v = values();
  if (v.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape().to_string());
  return v[0];
}

Tensor Tape::record(Shape shape, std::vector<double> value, bool requires_grad, BackwardFn backward) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  Node node;
  node.shape = shape;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return {this, id};
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape.to_string());
  }
  return record(shape, std::move(values), false, nullptr);
}

Tensor Tape::constant(std::initializer_list<double> values) {
  return constant(Shape(values.size()), std::vector<double>(values));
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw ShapeError("variable: " + std::to_string(values.size()) + " values for shape " +
                     shape.to_string());
  }
  return record(shape, std::move(values), true, [](Tape&, std::uint32_t) {});
}

Tensor Tape::param(const Parameter& p, bool trainable) {
  if (auto it = bound_.find(p.id); it != bound_.end()) return {this, it->second};
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  Node node;
  node.shape = p.shape;
  node.param = &p;
  node.requires_grad = trainable;
  if (trainable) node.backward = [](Tape&, std::uint32_t) {};
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  bound_.emplace(p.id, id);
  return {this, id};
}

std::span<const double> Tape::value_of(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.param != nullptr) return n.param->value;
  return n.value;
}

std::span<double> Tape::grad_slot(std::uint32_t id) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].shape.size(), 0.0);
  return g;
}

std::span<const double> Tape::grad(Tensor t) const { return grads_[t.id()]; }

Gradients Tape::backward(Tensor loss) {
  if (loss.tape() != this) throw ShapeError("backward: loss is not on this tape");
  if (loss.shape().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + loss.shape().to_string());
  }
  for (auto& g : grads_) g.clear();
  Gradients out;
  if (!nodes_[loss.id()].requires_grad) return out;
  grad_slot(loss.id())[0] = 1.0;
  for (std::uint32_t i = loss.id() + 1; i-- > 0;) {
    if (grads_[i].empty() || !nodes_[i].requires_grad) continue;
    nodes_[i].backward(*this, i);
    if (const Parameter* p = nodes_[i].param) {
      auto& slot = out.slot(p->id, grads_[i].size());
      for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += grads_[i][k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operations

Tensor add(Tensor a, Tensor b) {
  Tape& t = same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    for (auto in : {ia, ib}) {
                      if (!tp.requires_grad(in)) continue;
                      auto d = tp.grad_slot(in);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                  });
}

Tensor sub(Tensor a, Tensor b) {
  Tape& t = same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    if (tp.requires_grad(ia)) {
                      auto d = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto d = tp.grad_slot(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                    }
                  });
}

Tensor mul_elementwise(Tensor a, Tensor b) {
  Tape& t = same_tape(a, b, "mul_elementwise");
  require_same_shape(a, b, "mul_elementwise");
  auto x = a.values(), y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(a.shape(), std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    if (tp.requires_grad(ia)) {
                      auto d = tp.grad_slot(ia);
                      auto y = tp.value_of(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto d = tp.grad_slot(ib);
                      auto x = tp.value_of(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * x[i];
                    }
                  });
}

Tensor scale(Tensor a, double c) {
  Tape& t = *a.tape();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  const auto ia = a.id();
  return t.record(a.shape(), std::move(out), a.requires_grad(), [ia, c](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto d = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += c * g[i];
  });
}

Tensor abs_elementwise(Tensor a) {
  Tape& t = *a.tape();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x[i]);
  const auto ia = a.id();
  return t.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto x = tp.value_of(ia);
    auto d = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) {
        d[i] += g[i];
      } else if (x[i] < 0.0) {
        d[i] -= g[i];
      }
    }
  });
}

Tensor matmul(Tensor a, Tensor b) {
  Tape& t = same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.rank() != 2 || sa.cols() != sb.rows()) {
    throw ShapeError("matmul: shape mismatch " + sa.to_string() + " vs " + sb.to_string());
  }
  const std::size_t m = sa.rows(), k = sa.cols(), n = sb.cols();
  auto x = a.values(), w = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      const double* wr = w.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += xv * wr[j];
    }
  }
  const Shape out_shape = sa.rank() == 1 ? Shape(n) : Shape(m, n);
  const auto ia = a.id(), ib = b.id();
  return t.record(out_shape, std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib, m, k, n](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    if (tp.requires_grad(ia)) {
                      // dA = dC * B^T
                      auto w = tp.value_of(ib);
                      auto d = tp.grad_slot(ia);
                      for (std::size_t i = 0; i < m; ++i) {
                        const double* gr = g.data() + i * n;
                        for (std::size_t p = 0; p < k; ++p) {
                          d[i * k + p] += dot(gr, w.data() + p * n, n);
                        }
                      }
                    }
                    if (tp.requires_grad(ib)) {
                      // dB = A^T * dC
                      auto x = tp.value_of(ia);
                      auto d = tp.grad_slot(ib);
                      for (std::size_t p = 0; p < k; ++p) {
                        double* dr = d.data() + p * n;
                        for (std::size_t i = 0; i < m; ++i) {
                          const double xv = x[i * k + p];
                          if (xv == 0.0) continue;
                          const double* gr = g.data() + i * n;
                          for (std::size_t j = 0; j < n; ++j) dr[j] += xv * gr[j];
                        }
                      }
                    }
                  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = *parts.front().tape();
  const Shape first = parts.front().shape();
  const std::size_t rank = first.rank();
  if (axis >= rank) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + first.to_string());
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    if (p.tape() != &t) throw ShapeError("concat: operands belong to different tapes");
    const Shape& s = p.shape();
    const bool ok = s.rank() == rank && (rank == 1 || (axis == 0 ? s.cols() == first.cols() : s.rows() == first.rows()));
    if (!ok) throw ShapeError("concat: shape mismatch " + first.to_string() + " vs " + s.to_string());
    needs_grad = needs_grad || p.requires_grad();
  }

  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) ids.push_back(p.id());

  if (rank == 1 || axis == 0) {
    // Contiguous blocks.
    std::vector<double> out;
    std::size_t total_rows = 0;
    for (const Tensor& p : parts) {
      auto v = p.values();
      out.insert(out.end(), v.begin(), v.end());
      total_rows += p.shape().rows();
    }
    const Shape out_shape = rank == 1 ? Shape(out.size()) : Shape(total_rows, first.cols());
    return t.record(out_shape, std::move(out), needs_grad, [ids = std::move(ids)](Tape& tp, std::uint32_t self) {
      auto g = tp.grad_of(self);
      std::size_t off = 0;
      for (auto in : ids) {
        const std::size_t len = tp.shape_of(in).size();
        if (tp.requires_grad(in)) {
          auto d = tp.grad_slot(in);
          for (std::size_t i = 0; i < len; ++i) d[i] += g[off + i];
        }
        off += len;
      }
    });
  }

  // Rank 2, axis 1: interleave column blocks row by row.
  const std::size_t rows = first.rows();
  std::size_t total_cols = 0;
  for (const Tensor& p : parts) total_cols += p.shape().cols();
  std::vector<double> out(rows * total_cols);
  std::size_t col_off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.shape().cols();
    auto v = p.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * c, c, out.data() + r * total_cols + col_off);
    }
    col_off += c;
  }
  return t.record(Shape(rows, total_cols), std::move(out), needs_grad,
                  [ids = std::move(ids), rows, total_cols](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    std::size_t off = 0;
                    for (auto in : ids) {
                      const std::size_t c = tp.shape_of(in).cols();
                      if (tp.requires_grad(in)) {
                        auto d = tp.grad_slot(in);
                        for (std::size_t r = 0; r < rows; ++r) {
                          for (std::size_t j = 0; j < c; ++j) d[r * c + j] += g[r * total_cols + off + j];
                        }
                      }
                      off += c;
                    }
                  });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor stack(std::span<const Tensor> rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  const Shape first = rows.front().shape();
  if (first.rank() != 1) throw ShapeError("stack: expected vectors, got " + first.to_string());
  for (const Tensor& r : rows) {
    if (!(r.shape() == first)) throw ShapeError("stack: shape mismatch " + first.to_string() + " vs " + r.shape().to_string());
  }
  Tensor flat = concat(rows, 0);
  // Reinterpret the concatenation as a matrix without copying gradients twice.
  Tape& t = *flat.tape();
  auto v = flat.values();
  const auto iflat = flat.id();
  return t.record(Shape(rows.size(), first.size()), std::vector<double>(v.begin(), v.end()), flat.requires_grad(),
                  [iflat](Tape& tp, std::uint32_t self) {
                    auto g = tp.grad_of(self);
                    auto d = tp.grad_slot(iflat);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                  });
}

Tensor row(Tensor table, std::size_t index) {
  const Shape& s = table.shape();
  if (s.rank() != 2) throw ShapeError("row: expected a matrix, got " + s.to_string());
  if (index >= s.rows()) {
    throw ShapeError("row: index " + std::to_string(index) + " out of range for " + s.to_string());
  }
  Tape& t = *table.tape();
  const std::size_t d = s.cols();
  auto v = table.values();
  std::vector<double> out(v.begin() + index * d, v.begin() + (index + 1) * d);
  const auto it = table.id();
  return t.record(Shape(d), std::move(out), table.requires_grad(), [it, index, d](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto dt = tp.grad_slot(it);
    for (std::size_t j = 0; j < d; ++j) dt[index * d + j] += g[j];
  });
}

Tensor sum(Tensor a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.values()) s += v;
  const auto ia = a.id();
  return t.record(Shape(1), {s}, a.requires_grad(), [ia](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0];
    auto d = tp.grad_slot(ia);
    for (double& x : d) x += g;
  });
}

Tensor mean(Tensor a) {
  const std::size_t n = a.shape().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.values()) s += v;
  const auto ia = a.id();
  return t.record(Shape(1), {s / static_cast<double>(n)}, a.requires_grad(), [ia, n](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0] / static_cast<double>(n);
    auto d = tp.grad_slot(ia);
    for (double& x : d) x += g;
  });
}

Tensor sigmoid(Tensor a) {
  Tape& t = *a.tape();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Split on sign so exp() never overflows.
    out[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
  }
  const auto ia = a.id();
  return t.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto y = tp.value_of(self);
    auto d = tp.grad_slot(ia);
    const double k = 1.0 + testing::backward_perturbation();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += k * g[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor tanh_act(Tensor a) {
  Tape& t = *a.tape();
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  const auto ia = a.id();
  return t.record(a.shape(), std::move(out), a.requires_grad(), [ia](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto y = tp.value_of(self);
    auto d = tp.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Tensor log_softmax(Tensor a) {
  Tape& t = *a.tape();
  const Shape& s = a.shape();
  const std::size_t rows = s.rows(), cols = s.cols();
  if (cols == 0) throw ShapeError("log_softmax: empty input");
  auto x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) o[j] = xr[j] - lz;
  }
  const auto ia = a.id();
  return t.record(s, std::move(out), a.requires_grad(), [ia, rows, cols](Tape& tp, std::uint32_t self) {
    auto g = tp.grad_of(self);
    auto y = tp.value_of(self);
    auto d = tp.grad_slot(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        d[r * cols + j] += g[r * cols + j] - std::exp(y[r * cols + j]) * gs;
      }
    }
  });
}

Tensor max_over_time(Tensor h) {
  const Shape& s = h.shape();
  if (s.rank() != 2) throw ShapeError("max_over_time: expected [T x d], got " + s.to_string());
  const std::size_t steps = s.rows(), d = s.cols();
  if (steps == 0) throw ShapeError("max_over_time: empty time dimension");
  auto v = h.values();
  std::vector<double> out(v.begin(), v.begin() + d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      if (v[t * d + j] > out[j]) {
        out[j] = v[t * d + j];
        arg[j] = t;
      }
    }
  }
  Tape& tape = *h.tape();
  const auto ih = h.id();
  return tape.record(Shape(d), std::move(out), h.requires_grad(),
                     [ih, d, arg = std::move(arg)](Tape& tp, std::uint32_t self) {
                       auto g = tp.grad_of(self);
                       auto dh = tp.grad_slot(ih);
                       for (std::size_t j = 0; j < d; ++j) dh[arg[j] * d + j] += g[j];
                     });
}

void sgd_step(std::span<Parameter* const> params, const Gradients& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("sgd_step: learning rate must be finite and non-negative, got " + std::to_string(lr));
  }
  if (lr == 0.0) return;
  for (Parameter* p : params) {
    auto g = grads.get(p->id);
    if (g.empty()) continue;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] != 0.0) p->value[i] -= lr * g[i];
    }
  }
}

namespace testing {
void set_backward_perturbation(double factor) { perturbation.store(factor); }
double backward_perturbation() { return perturbation.load(std::memory_order_relaxed); }
}  // namespace testing

}  // namespace relsim::ad
