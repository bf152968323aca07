#pragma once

// SystemParams <-> key-value text.
//
//   n = 3
//   p = 2
//   A = 0.3 0 0  0 0.15 0  0 0 0.12     # row-major, n*n entries
//   B = 1 0  0 1  0.5 0.4               # row-major, n*p entries
//   C = 1 0 0  0 1 0.3                  # row-major, p*n entries
//   sigma_w_diag = 1e-4 1e-4 1e-4       # or: sigma_w = <n*n row-major>
//   sigma_z = 0.01
//
// `sigma_w` and `sigma_w_diag` are mutually exclusive; omitting both means
// no process noise.

#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "etcb/keyvalue.hpp"
#include "etcb/lds.hpp"

namespace etcb {

namespace detail {
inline MatrixXd read_row_major(const KeyValues& kv, const std::string& key,
                               Index rows, Index cols) {
  const auto vals = kv.get_doubles(key);
  if (static_cast<Index>(vals.size()) != rows * cols)
    throw InputError(key + " needs " + std::to_string(rows * cols) +
                     " entries, got " + std::to_string(vals.size()));
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = vals[i * cols + j];
  return m;
}

inline std::string format_row_major(const MatrixXd& m) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      if (i || j) os << ' ';
      os << m(i, j);
    }
  return os.str();
}
}  // namespace detail

inline SystemParams system_from_keyvalues(const KeyValues& kv) {
  const long long n = kv.get_int("n");
  const long long p = kv.get_int("p");
  detail::require(n >= 1 && p >= 1, "n and p must be positive");
  MatrixXd a = detail::read_row_major(kv, "A", n, n);
  MatrixXd b = detail::read_row_major(kv, "B", n, p);
  MatrixXd c = detail::read_row_major(kv, "C", p, n);
  if (kv.has("sigma_w") && kv.has("sigma_w_diag"))
    throw InputError("give either sigma_w or sigma_w_diag, not both");
  MatrixXd sw = MatrixXd::Zero(n, n);
  if (kv.has("sigma_w")) {
    sw = detail::read_row_major(kv, "sigma_w", n, n);
  } else if (kv.has("sigma_w_diag")) {
    sw.diagonal() = detail::read_row_major(kv, "sigma_w_diag", n, 1).col(0);
  }
  return SystemParams::create(std::move(a), std::move(b), std::move(c),
                              std::move(sw), kv.get_double("sigma_z", 0.0));
}

inline SystemParams load_system(const std::string& path) {
  return system_from_keyvalues(KeyValues::load(path));
}

inline void write_system(std::ostream& os, const SystemParams& s) {
  os << "n = " << s.n() << "\n"
     << "p = " << s.p() << "\n"
     << "A = " << detail::format_row_major(s.A()) << "\n"
     << "B = " << detail::format_row_major(s.B()) << "\n"
     << "C = " << detail::format_row_major(s.C()) << "\n"
     << "sigma_w = " << detail::format_row_major(s.sigma_w()) << "\n";
  std::ostringstream z;
  z << std::setprecision(std::numeric_limits<double>::max_digits10)
    << s.sigma_z();
  os << "sigma_z = " << z.str() << "\n";
}

}  // namespace etcb
