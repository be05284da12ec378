// core.hpp: dense states and operators on small composite Hilbert spaces:
// layouts, embeddings, partial traces, unitary evolution, entropies.
//
// Units: hbar = k_B = 1, entropies in nats.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qhx {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

namespace tolerance {
inline constexpr double hermitian = 1e-12;
inline constexpr double trace = 1e-12;
inline constexpr double psd = 1e-10;
inline constexpr double unitary = 1e-10;
inline constexpr double imaginary = 1e-10;
}  // namespace tolerance

// Raised when a matrix violates a state/operator invariant.
class InvalidState : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// --------------------------- SubsystemLayout --------------------------------

// Ordered subsystem dimensions; site 0 is the most significant digit of the
// composite index (kron ordering).
class SubsystemLayout {
 public:
  SubsystemLayout() = default;

  explicit SubsystemLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw std::invalid_argument("SubsystemLayout: no subsystems");
    for (auto d : dims_) {
      if (d < 2) throw std::invalid_argument("SubsystemLayout: every dimension must be >= 2");
    }
    strides_.assign(dims_.size(), 1);
    for (std::size_t k = dims_.size() - 1; k > 0; --k) strides_[k - 1] = strides_[k] * dims_[k];
    total_ = strides_[0] * dims_[0];
  }

  SubsystemLayout(std::initializer_list<std::size_t> dims)
      : SubsystemLayout(std::vector<std::size_t>(dims)) {}

  std::size_t size() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t site) const { return dims_.at(site); }
  std::size_t total_dim() const noexcept { return total_; }
  std::size_t stride(std::size_t site) const { return strides_.at(site); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  std::size_t digit(std::size_t index, std::size_t site) const {
    return (index / strides_[site]) % dims_[site];
  }

  // Layout of the listed sites, in the listed order.
  SubsystemLayout select(std::span<const std::size_t> sites) const {
    std::vector<std::size_t> d;
    d.reserve(sites.size());
    for (auto s : sites) d.push_back(dim(s));
    return SubsystemLayout(std::move(d));
  }

  bool operator==(const SubsystemLayout&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> strides_;
  std::size_t total_{0};
};

// --------------------------- raw-matrix helpers ------------------------------

namespace detail {

inline double hermiticity_defect(const Matrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

inline void require_square(const Matrix& m, std::size_t n, const char* who) {
  if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != n) {
    throw std::invalid_argument(std::string(who) + ": matrix dimension does not match layout");
  }
}

// Validates a site list against a layout: in range, no duplicates.
inline void require_sites(std::span<const std::size_t> sites, const SubsystemLayout& layout,
                          const char* who) {
  std::vector<bool> seen(layout.size(), false);
  for (auto s : sites) {
    if (s >= layout.size()) throw std::out_of_range(std::string(who) + ": site index out of range");
    if (seen[s]) throw std::invalid_argument(std::string(who) + ": duplicate site index");
    seen[s] = true;
  }
}

// op acts on `sites` (in that order); identity elsewhere.
inline Matrix embed(const Matrix& op, std::span<const std::size_t> sites,
                    const SubsystemLayout& layout) {
  require_sites(sites, layout, "embed");
  std::size_t sub = 1;
  for (auto s : sites) sub *= layout.dim(s);
  if (op.rows() != op.cols() || static_cast<std::size_t>(op.rows()) != sub) {
    throw std::invalid_argument("embed: operator dimension does not match the selected sites");
  }
  std::vector<bool> active(layout.size(), false);
  for (auto s : sites) active[s] = true;

  const auto n = layout.total_dim();
  auto local_index = [&](std::size_t full) {
    std::size_t idx = 0;
    for (auto s : sites) idx = idx * layout.dim(s) + layout.digit(full, s);
    return idx;
  };
  auto spectator_key = [&](std::size_t full) {
    std::size_t key = 0;
    for (std::size_t s = 0; s < layout.size(); ++s) {
      if (!active[s]) key = key * layout.dim(s) + layout.digit(full, s);
    }
    return key;
  };

  std::vector<std::size_t> local(n), spect(n);
  for (std::size_t i = 0; i < n; ++i) {
    local[i] = local_index(i);
    spect[i] = spectator_key(i);
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (spect[i] == spect[j]) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            op(static_cast<Eigen::Index>(local[i]), static_cast<Eigen::Index>(local[j]));
      }
    }
  }
  return out;
}

// Reduced matrix on `keep` (sorted ascending), tracing out the rest.
inline Matrix partial_trace(const Matrix& m, std::span<const std::size_t> keep,
                            const SubsystemLayout& layout) {
  const auto n = layout.total_dim();
  std::vector<bool> kept(layout.size(), false);
  for (auto s : keep) kept[s] = true;

  std::size_t sub = 1;
  for (auto s : keep) sub *= layout.dim(s);

  std::vector<std::size_t> local(n), traced(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t l = 0, t = 0;
    for (std::size_t s = 0; s < layout.size(); ++s) {
      const auto d = layout.digit(i, s);
      if (kept[s]) {
        l = l * layout.dim(s) + d;
      } else {
        t = t * layout.dim(s) + d;
      }
    }
    local[i] = l;
    traced[i] = t;
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(sub), static_cast<Eigen::Index>(sub));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (traced[i] == traced[j]) {
        out(static_cast<Eigen::Index>(local[i]), static_cast<Eigen::Index>(local[j])) +=
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return out;
}

// Zeroes every element whose row/column indices differ on any of `sites`.
inline Matrix dephase(const Matrix& m, std::span<const std::size_t> sites,
                      const SubsystemLayout& layout) {
  Matrix out = m;
  const auto n = layout.total_dim();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (auto s : sites) {
        if (layout.digit(i, s) != layout.digit(j, s)) {
          out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
          break;
        }
      }
    }
  }
  return out;
}

inline RealVector hermitian_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  return solver.eigenvalues();
}

inline double entropy_of(const Matrix& rho) {
  const RealVector ev = hermitian_eigenvalues(rho);
  double s = 0.0;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    const double p = ev(k);
    if (p < -tolerance::psd) {
      throw InvalidState("von_neumann_entropy: eigenvalue " + std::to_string(p) +
                         " below -1e-10");
    }
    if (p > 0.0) s -= p * std::log(p);
  }
  return s;
}

// Sum of singular values.
inline double trace_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

// tr(A B) without forming the product.
inline Complex trace_product(const Matrix& a, const Matrix& b) {
  return (a.transpose().array() * b.array()).sum();
}

// U rho U† − rho for U = I + d, without cancellation against rho.
inline Matrix conjugation_increment(const Matrix& d, const Matrix& rho) {
  const Matrix d_rho = d * rho;
  return d_rho + rho * d.adjoint() + d_rho * d.adjoint();
}

}  // namespace detail

// --------------------------- value types ------------------------------------

class HermitianOperator {
 public:
  HermitianOperator(SubsystemLayout layout, Matrix data) : layout_(std::move(layout)) {
    detail::require_square(data, layout_.total_dim(), "HermitianOperator");
    if (detail::hermiticity_defect(data) > tolerance::hermitian) {
      throw InvalidState("HermitianOperator: matrix is not Hermitian within 1e-12");
    }
    data_ = detail::hermitian_part(data);
  }

  static HermitianOperator identity(const SubsystemLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    return HermitianOperator(layout, Matrix::Identity(n, n));
  }

  static HermitianOperator zero(const SubsystemLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    return HermitianOperator(layout, Matrix::Zero(n, n));
  }

  static HermitianOperator diagonal(const SubsystemLayout& layout, const std::vector<double>& d) {
    if (d.size() != layout.total_dim()) throw std::invalid_argument("diagonal: size mismatch");
    RealVector v = Eigen::Map<const RealVector>(d.data(), static_cast<Eigen::Index>(d.size()));
    return HermitianOperator(layout, v.cast<Complex>().asDiagonal());
  }

  const SubsystemLayout& layout() const noexcept { return layout_; }
  const Matrix& matrix() const noexcept { return data_; }
  std::size_t dim() const noexcept { return layout_.total_dim(); }

  HermitianOperator operator+(const HermitianOperator& o) const {
    if (!(layout_ == o.layout_)) throw std::invalid_argument("HermitianOperator: layout mismatch");
    return HermitianOperator(layout_, data_ + o.data_);
  }
  HermitianOperator operator*(double k) const { return HermitianOperator(layout_, data_ * k); }

 private:
  SubsystemLayout layout_;
  Matrix data_;
};

// Stores the deviation D = U − I so that near-identity products keep their
// small part at full relative precision.
class UnitaryOperator {
 public:
  UnitaryOperator(SubsystemLayout layout, const Matrix& u) : layout_(std::move(layout)) {
    detail::require_square(u, layout_.total_dim(), "UnitaryOperator");
    deviation_ = u - Matrix::Identity(u.rows(), u.cols());
    check_unitary();
  }

  static UnitaryOperator from_deviation(SubsystemLayout layout, Matrix deviation) {
    detail::require_square(deviation, layout.total_dim(), "UnitaryOperator");
    UnitaryOperator u;
    u.layout_ = std::move(layout);
    u.deviation_ = std::move(deviation);
    u.check_unitary();
    return u;
  }

  static UnitaryOperator identity(const SubsystemLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    return from_deviation(layout, Matrix::Zero(n, n));
  }

  const SubsystemLayout& layout() const noexcept { return layout_; }
  const Matrix& deviation() const noexcept { return deviation_; }
  Matrix matrix() const {
    return deviation_ + Matrix::Identity(deviation_.rows(), deviation_.cols());
  }

  // (I + A)(I + B) = I + A + B + AB
  UnitaryOperator operator*(const UnitaryOperator& rhs) const {
    if (!(layout_ == rhs.layout_)) throw std::invalid_argument("UnitaryOperator: layout mismatch");
    return from_deviation(layout_, deviation_ + rhs.deviation_ + deviation_ * rhs.deviation_);
  }

  UnitaryOperator adjoint() const { return from_deviation(layout_, deviation_.adjoint()); }

  // max |U†U − I| over elements
  double unitarity_defect() const {
    const Matrix g = deviation_ + deviation_.adjoint() + deviation_.adjoint() * deviation_;
    return g.cwiseAbs().maxCoeff();
  }

 private:
  UnitaryOperator() = default;

  void check_unitary() const {
    if (unitarity_defect() > tolerance::unitary) {
      throw InvalidState("UnitaryOperator: U†U deviates from identity by more than 1e-10");
    }
  }

  SubsystemLayout layout_;
  Matrix deviation_;
};

class DensityMatrix {
 public:
  DensityMatrix(SubsystemLayout layout, const Matrix& data) : layout_(std::move(layout)) {
    detail::require_square(data, layout_.total_dim(), "DensityMatrix");
    if (detail::hermiticity_defect(data) > tolerance::hermitian) {
      throw InvalidState("DensityMatrix: not Hermitian within 1e-12");
    }
    const Complex tr = data.trace();
    if (std::abs(tr - 1.0) > tolerance::trace) {
      throw InvalidState("DensityMatrix: trace " + std::to_string(tr.real()) + " differs from 1");
    }
    data_ = detail::hermitian_part(data);
    const double min_ev = detail::hermitian_eigenvalues(data_).minCoeff();
    if (min_ev < -tolerance::psd) {
      throw InvalidState("DensityMatrix: eigenvalue " + std::to_string(min_ev) + " below -1e-10");
    }
  }

  static DensityMatrix diagonal(const SubsystemLayout& layout, const std::vector<double>& p) {
    if (p.size() != layout.total_dim()) throw std::invalid_argument("diagonal: size mismatch");
    RealVector v = Eigen::Map<const RealVector>(p.data(), static_cast<Eigen::Index>(p.size()));
    return DensityMatrix(layout, v.cast<Complex>().asDiagonal());
  }

  static DensityMatrix pure(const SubsystemLayout& layout, const Eigen::VectorXcd& psi) {
    if (static_cast<std::size_t>(psi.size()) != layout.total_dim()) {
      throw std::invalid_argument("pure: size mismatch");
    }
    const Eigen::VectorXcd v = psi / psi.norm();
    return DensityMatrix(layout, v * v.adjoint());
  }

  static DensityMatrix maximally_mixed(const SubsystemLayout& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total_dim());
    return DensityMatrix(layout, Matrix::Identity(n, n) / static_cast<double>(n));
  }

  const SubsystemLayout& layout() const noexcept { return layout_; }
  const Matrix& matrix() const noexcept { return data_; }
  std::size_t dim() const noexcept { return layout_.total_dim(); }

  std::vector<double> populations() const {
    std::vector<double> p(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      p[i] = data_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    }
    return p;
  }

 private:
  SubsystemLayout layout_;
  Matrix data_;
};

// --------------------------- operations -------------------------------------

inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  std::vector<std::size_t> dims = a.layout().dims();
  dims.insert(dims.end(), b.layout().dims().begin(), b.layout().dims().end());
  const Matrix& ma = a.matrix();
  const Matrix& mb = b.matrix();
  Matrix out(ma.rows() * mb.rows(), ma.cols() * mb.cols());
  for (Eigen::Index i = 0; i < ma.rows(); ++i) {
    for (Eigen::Index j = 0; j < ma.cols(); ++j) {
      out.block(i * mb.rows(), j * mb.cols(), mb.rows(), mb.cols()) = ma(i, j) * mb;
    }
  }
  return DensityMatrix(SubsystemLayout(std::move(dims)), out);
}

inline DensityMatrix tensor(std::initializer_list<std::reference_wrapper<const DensityMatrix>> parts) {
  if (parts.size() == 0) throw std::invalid_argument("tensor: no factors");
  auto it = parts.begin();
  DensityMatrix acc = it->get();
  for (++it; it != parts.end(); ++it) acc = tensor(acc, it->get());
  return acc;
}

// op must be defined on layout.select(sites).
inline HermitianOperator embed(const HermitianOperator& op, std::span<const std::size_t> sites,
                               const SubsystemLayout& layout) {
  return HermitianOperator(layout, detail::embed(op.matrix(), sites, layout));
}

inline HermitianOperator embed(const HermitianOperator& op, std::initializer_list<std::size_t> sites,
                               const SubsystemLayout& layout) {
  const std::vector<std::size_t> s(sites);
  return embed(op, std::span<const std::size_t>(s), layout);
}

// Reduced state on `keep`; the reduced layout lists kept sites in ascending order.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> keep) {
  if (keep.empty()) throw std::invalid_argument("partial_trace: empty keep set");
  detail::require_sites(keep, rho.layout(), "partial_trace");
  std::vector<std::size_t> sorted(keep.begin(), keep.end());
  std::sort(sorted.begin(), sorted.end());
  return DensityMatrix(rho.layout().select(sorted),
                       detail::partial_trace(rho.matrix(), sorted, rho.layout()));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<std::size_t> keep) {
  const std::vector<std::size_t> k(keep);
  return partial_trace(rho, std::span<const std::size_t>(k));
}

// exp(−iHt) by Hermitian eigendecomposition.
inline UnitaryOperator evolve(const HermitianOperator& h, double t) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) throw std::runtime_error("evolve: eigensolver failed");
  const RealVector& w = solver.eigenvalues();
  Eigen::VectorXcd phase(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double x = w(k) * t;
    const double half = std::sin(0.5 * x);
    phase(k) = Complex(-2.0 * half * half, -std::sin(x));  // e^{-ix} − 1
  }
  const Matrix& v = solver.eigenvectors();
  return UnitaryOperator::from_deviation(h.layout(), v * phase.asDiagonal() * v.adjoint());
}

inline DensityMatrix apply(const UnitaryOperator& u, const DensityMatrix& rho) {
  if (!(u.layout() == rho.layout())) throw std::invalid_argument("apply: layout mismatch");
  return DensityMatrix(rho.layout(),
                       rho.matrix() + detail::conjugation_increment(u.deviation(), rho.matrix()));
}

inline double von_neumann_entropy(const DensityMatrix& rho) { return detail::entropy_of(rho.matrix()); }

inline double mutual_information(const DensityMatrix& rho, std::span<const std::size_t> part_a,
                                 std::span<const std::size_t> part_b) {
  if (part_a.empty() || part_b.empty()) {
    throw std::invalid_argument("mutual_information: empty partition block");
  }
  std::vector<std::size_t> all(part_a.begin(), part_a.end());
  all.insert(all.end(), part_b.begin(), part_b.end());
  try {
    detail::require_sites(all, rho.layout(), "mutual_information");
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("mutual_information: overlapping partition");
  }
  if (all.size() != rho.layout().size()) {
    throw std::invalid_argument("mutual_information: partition does not cover all subsystems");
  }
  return von_neumann_entropy(partial_trace(rho, part_a)) +
         von_neumann_entropy(partial_trace(rho, part_b)) - von_neumann_entropy(rho);
}

inline double mutual_information(const DensityMatrix& rho, std::initializer_list<std::size_t> a,
                                 std::initializer_list<std::size_t> b) {
  const std::vector<std::size_t> va(a), vb(b);
  return mutual_information(rho, std::span<const std::size_t>(va), std::span<const std::size_t>(vb));
}

// Removes every off-diagonal element in the product basis.
inline DensityMatrix dephase(const DensityMatrix& rho) {
  Matrix d = rho.matrix().diagonal().asDiagonal();
  return DensityMatrix(rho.layout(), d);
}

// Removes coherences between different basis states of the listed sites only.
inline DensityMatrix dephase(const DensityMatrix& rho, std::span<const std::size_t> sites) {
  detail::require_sites(sites, rho.layout(), "dephase");
  return DensityMatrix(rho.layout(), detail::dephase(rho.matrix(), sites, rho.layout()));
}

inline double spectral_norm(const HermitianOperator& op) {
  return detail::hermitian_eigenvalues(op.matrix()).cwiseAbs().maxCoeff();
}

// Largest singular value of an arbitrary matrix.
inline double spectral_norm(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double expectation(const DensityMatrix& rho, const HermitianOperator& op) {
  if (!(rho.layout() == op.layout())) throw std::invalid_argument("expectation: layout mismatch");
  const Complex v = detail::trace_product(rho.matrix(), op.matrix());
  if (std::abs(v.imag()) > tolerance::imaginary) {
    throw InvalidState("expectation: imaginary part exceeds 1e-10");
  }
  return v.real();
}

inline double trace_distance_norm(const DensityMatrix& a, const DensityMatrix& b) {
  if (!(a.layout() == b.layout())) throw std::invalid_argument("trace distance: layout mismatch");
  return detail::trace_norm(a.matrix() - b.matrix());
}

}  // namespace qhx
