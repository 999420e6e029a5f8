// Copyright (c) mpcc_opt contributors
#include "mpcc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mpcc::ad {

namespace {

struct Recorder {
  std::vector<Node> nodes;
  std::vector<double> values;
  int n_in = 0;
};

thread_local Recorder* g_recorder = nullptr;

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kSin: return "sin";
    case Op::kCos: return "cos";
    case Op::kTan: return "tan";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kPow: return "pow";
  }
  return "?";
}

double eval_op(Op op, double va, double vb, double aux) {
  switch (op) {
    case Op::kConst: return aux;
    case Op::kAdd: return va + vb;
    case Op::kSub: return va - vb;
    case Op::kMul: return va * vb;
    case Op::kDiv: return va / vb;
    case Op::kNeg: return -va;
    case Op::kSin: return std::sin(va);
    case Op::kCos: return std::cos(va);
    case Op::kTan: return std::tan(va);
    case Op::kExp: return std::exp(va);
    case Op::kLog: return std::log(va);
    case Op::kSqrt: return std::sqrt(va);
    case Op::kPow: return std::pow(va, aux);
    case Op::kInput: break;
  }
  return 0.0;
}

// First partials of a node w.r.t. its operands.
inline void first_partials(const Node& nd, double va, double vb, double vp, double& da,
                           double& db) {
  db = 0.0;
  switch (nd.op) {
    case Op::kAdd: da = 1.0; db = 1.0; break;
    case Op::kSub: da = 1.0; db = -1.0; break;
    case Op::kMul: da = vb; db = va; break;
    case Op::kDiv: da = 1.0 / vb; db = -vp / vb; break;
    case Op::kNeg: da = -1.0; break;
    case Op::kSin: da = std::cos(va); break;
    case Op::kCos: da = -std::sin(va); break;
    case Op::kTan: da = 1.0 + vp * vp; break;
    case Op::kExp: da = vp; break;
    case Op::kLog: da = 1.0 / va; break;
    case Op::kSqrt: da = 0.5 / vp; break;
    case Op::kPow: da = nd.aux * std::pow(va, nd.aux - 1.0); break;
    default: da = 0.0; break;
  }
}

// Directional derivative of the first partials given operand tangents
// (the second-order term of the adjoint-tangent sweep).
inline void partial_tangents(const Node& nd, double va, double vb, double vp, double ta,
                             double tb, double& dda, double& ddb) {
  dda = 0.0;
  ddb = 0.0;
  switch (nd.op) {
    case Op::kMul:
      dda = tb;
      ddb = ta;
      break;
    case Op::kDiv: {
      const double inv = 1.0 / vb;
      dda = -tb * inv * inv;
      ddb = (-ta + 2.0 * vp * tb) * inv * inv;
      break;
    }
    case Op::kSin: dda = -std::sin(va) * ta; break;
    case Op::kCos: dda = -std::cos(va) * ta; break;
    case Op::kTan: dda = 2.0 * vp * (1.0 + vp * vp) * ta; break;
    case Op::kExp: dda = vp * ta; break;
    case Op::kLog: dda = -ta / (va * va); break;
    case Op::kSqrt: dda = -ta / (4.0 * vp * vp * vp); break;
    case Op::kPow: dda = nd.aux * (nd.aux - 1.0) * std::pow(va, nd.aux - 2.0) * ta; break;
    default: break;
  }
}

inline double tangent_of(const Node& nd, double va, double vb, double vp, double ta,
                         double tb) {
  switch (nd.op) {
    case Op::kAdd: return ta + tb;
    case Op::kSub: return ta - tb;
    case Op::kMul: return ta * vb + va * tb;
    case Op::kDiv: return (ta - vp * tb) / vb;
    case Op::kNeg: return -ta;
    case Op::kSin: return std::cos(va) * ta;
    case Op::kCos: return -std::sin(va) * ta;
    case Op::kTan: return (1.0 + vp * vp) * ta;
    case Op::kExp: return vp * ta;
    case Op::kLog: return ta / va;
    case Op::kSqrt: return 0.5 * ta / vp;
    case Op::kPow: return nd.aux * std::pow(va, nd.aux - 1.0) * ta;
    default: return 0.0;
  }
}

// Whether the node can carry curvature. Multiplication or division by a
// recorded constant is linear and kept out of the Hessian structure.
bool is_nonlinear(const std::vector<Node>& nodes, const Node& nd) {
  switch (nd.op) {
    case Op::kMul:
      return nodes[nd.a].op != Op::kConst && nodes[nd.b].op != Op::kConst;
    case Op::kDiv:
      return nodes[nd.b].op != Op::kConst;
    case Op::kPow:
      return nd.aux != 0.0 && nd.aux != 1.0;
    case Op::kSin:
    case Op::kCos:
    case Op::kTan:
    case Op::kExp:
    case Op::kLog:
    case Op::kSqrt:
      return true;
    default:
      return false;
  }
}

std::int32_t push_node(Recorder& rec, Node nd, double value) {
  rec.nodes.push_back(nd);
  rec.values.push_back(value);
  return static_cast<std::int32_t>(rec.nodes.size() - 1);
}

std::int32_t ensure_on_tape(Recorder& rec, const Var& v) {
  if (v.node >= 0) return v.node;
  return push_node(rec, Node{Op::kConst, -1, -1, v.value}, v.value);
}

Var unary(Op op, const Var& x, double aux = 0.0) {
  const double value = eval_op(op, x.value, 0.0, aux);
  Recorder* rec = g_recorder;
  if (rec == nullptr) return Var(value);
  const std::int32_t a = ensure_on_tape(*rec, x);
  Var out(value);
  out.node = push_node(*rec, Node{op, a, -1, aux}, value);
  return out;
}

Var binary(Op op, const Var& x, const Var& y) {
  const double value = eval_op(op, x.value, y.value, 0.0);
  Recorder* rec = g_recorder;
  if (rec == nullptr) return Var(value);
  const std::int32_t a = ensure_on_tape(*rec, x);
  const std::int32_t b = ensure_on_tape(*rec, y);
  Var out(value);
  out.node = push_node(*rec, Node{op, a, b, 0.0}, value);
  return out;
}

bool compare(const char* what, const Var& x, const Var& y, int mode) {
  if (g_recorder != nullptr && (x.node >= 0 || y.node >= 0)) {
    throw RecordingError(std::string("branch on a traced value: operator") + what +
                         " is not a tapeable primitive");
  }
  switch (mode) {
    case 0: return x.value < y.value;
    case 1: return x.value <= y.value;
    case 2: return x.value > y.value;
    case 3: return x.value >= y.value;
    case 4: return x.value == y.value;
    default: return x.value != y.value;
  }
}

struct SparseAccum {
  std::vector<double>* v;
  std::vector<std::uint64_t>* stamp;
  std::uint64_t epoch;

  double get(std::int32_t i) const { return (*stamp)[i] == epoch ? (*v)[i] : 0.0; }
  void add(std::int32_t i, double x) {
    if ((*stamp)[i] == epoch) {
      (*v)[i] += x;
    } else {
      (*stamp)[i] = epoch;
      (*v)[i] = x;
    }
  }
  void set(std::int32_t i, double x) {
    (*stamp)[i] = epoch;
    (*v)[i] = x;
  }
};

SparseAccum accum_a(Tape::Scratch& s, std::size_t n) {
  if (s.sparse_a.size() < n) {
    s.sparse_a.resize(n);
    s.stamp_a.resize(n, 0);
  }
  ++s.epoch_a;
  return SparseAccum{&s.sparse_a, &s.stamp_a, s.epoch_a};
}

SparseAccum accum_b(Tape::Scratch& s, std::size_t n) {
  if (s.sparse_b.size() < n) {
    s.sparse_b.resize(n);
    s.stamp_b.resize(n, 0);
  }
  ++s.epoch_b;
  return SparseAccum{&s.sparse_b, &s.stamp_b, s.epoch_b};
}

void ensure_scratch(Tape::Workspace& ws, int threads) {
  if (static_cast<int>(ws.per_thread.size()) < threads) {
    ws.per_thread.resize(threads);
  }
}

}  // namespace

Var& Var::operator+=(const Var& r) { return *this = *this + r; }
Var& Var::operator-=(const Var& r) { return *this = *this - r; }
Var& Var::operator*=(const Var& r) { return *this = *this * r; }
Var& Var::operator/=(const Var& r) { return *this = *this / r; }

Var operator+(const Var& x, const Var& y) { return binary(Op::kAdd, x, y); }
Var operator-(const Var& x, const Var& y) { return binary(Op::kSub, x, y); }
Var operator*(const Var& x, const Var& y) { return binary(Op::kMul, x, y); }
Var operator/(const Var& x, const Var& y) { return binary(Op::kDiv, x, y); }
Var operator-(const Var& x) { return unary(Op::kNeg, x); }
Var operator+(const Var& x) { return x; }
Var sin(const Var& x) { return unary(Op::kSin, x); }
Var cos(const Var& x) { return unary(Op::kCos, x); }
Var tan(const Var& x) { return unary(Op::kTan, x); }
Var exp(const Var& x) { return unary(Op::kExp, x); }
Var log(const Var& x) { return unary(Op::kLog, x); }
Var sqrt(const Var& x) { return unary(Op::kSqrt, x); }
Var pow(const Var& x, double e) { return unary(Op::kPow, x, e); }
Var pow(const Var& x, int e) { return unary(Op::kPow, x, static_cast<double>(e)); }

Var smooth_max(const Var& a, const Var& b, double eps) {
  const Var d = a - b;
  return 0.5 * (a + b + sqrt(d * d + eps * eps));
}

Var smooth_min(const Var& a, const Var& b, double eps) {
  const Var d = a - b;
  return 0.5 * (a + b - sqrt(d * d + eps * eps));
}

Var smooth_abs(const Var& a, double eps) { return sqrt(a * a + eps * eps); }

bool operator<(const Var& x, const Var& y) { return compare("<", x, y, 0); }
bool operator<=(const Var& x, const Var& y) { return compare("<=", x, y, 1); }
bool operator>(const Var& x, const Var& y) { return compare(">", x, y, 2); }
bool operator>=(const Var& x, const Var& y) { return compare(">=", x, y, 3); }
bool operator==(const Var& x, const Var& y) { return compare("==", x, y, 4); }
bool operator!=(const Var& x, const Var& y) { return compare("!=", x, y, 5); }

double SparseMatrix::at(int r, int c) const {
  const auto it = std::lower_bound(pattern.entries.begin(), pattern.entries.end(),
                                   std::make_pair(r, c));
  if (it == pattern.entries.end() || *it != std::make_pair(r, c)) return 0.0;
  return values[static_cast<std::size_t>(it - pattern.entries.begin())];
}

std::vector<double> SparseMatrix::dense_row_major() const {
  std::vector<double> out(static_cast<std::size_t>(pattern.rows) * pattern.cols, 0.0);
  for (std::size_t k = 0; k < pattern.entries.size(); ++k) {
    const auto [r, c] = pattern.entries[k];
    out[static_cast<std::size_t>(r) * pattern.cols + c] = values[k];
  }
  return out;
}

Tape record(int n_in, const std::function<std::vector<Var>(std::span<const Var>)>& fn,
            std::span<const double> point) {
  if (g_recorder != nullptr) throw RecordingError("record() calls cannot be nested");
  if (!point.empty() && static_cast<int>(point.size()) != n_in) {
    throw Error("record(): recording point has wrong dimension");
  }

  Recorder rec;
  rec.n_in = n_in;
  rec.nodes.reserve(static_cast<std::size_t>(n_in) + 64);
  std::vector<Var> inputs(static_cast<std::size_t>(n_in));
  for (int i = 0; i < n_in; ++i) {
    const double v = point.empty() ? 0.0 : point[i];
    push_node(rec, Node{Op::kInput, -1, -1, 0.0}, v);
    inputs[i].value = v;
    inputs[i].node = i;
  }

  g_recorder = &rec;
  std::vector<Var> outs;
  try {
    outs = fn(inputs);
  } catch (...) {
    g_recorder = nullptr;
    throw;
  }
  std::vector<std::int32_t> out_ids;
  out_ids.reserve(outs.size());
  for (const Var& o : outs) out_ids.push_back(ensure_on_tape(rec, o));
  g_recorder = nullptr;

  Tape tape;
  tape.n_in_ = n_in;
  tape.nodes_ = std::move(rec.nodes);
  tape.outputs_ = std::move(out_ids);
  tape.recording_point_.assign(point.begin(), point.end());
  if (tape.recording_point_.empty()) tape.recording_point_.assign(n_in, 0.0);
  tape.recorded_outputs_.reserve(tape.outputs_.size());
  for (std::int32_t id : tape.outputs_) tape.recorded_outputs_.push_back(rec.values[id]);
  tape.build_structure();
  return tape;
}

void Tape::build_structure() {
  const std::int32_t n = static_cast<std::int32_t>(nodes_.size());
  const int n_out = num_outputs();

  // Users adjacency (operand -> consumers), CSR.
  std::vector<std::int32_t> user_count(n + 1, 0);
  for (const Node& nd : nodes_) {
    if (nd.a >= 0) ++user_count[nd.a + 1];
    if (nd.b >= 0) ++user_count[nd.b + 1];
  }
  for (std::int32_t i = 0; i < n; ++i) user_count[i + 1] += user_count[i];
  std::vector<std::int32_t> users(user_count[n]);
  {
    std::vector<std::int32_t> fill(user_count.begin(), user_count.end() - 1);
    for (std::int32_t i = 0; i < n; ++i) {
      if (nodes_[i].a >= 0) users[fill[nodes_[i].a]++] = i;
      if (nodes_[i].b >= 0) users[fill[nodes_[i].b]++] = i;
    }
  }

  std::vector<std::uint32_t> mark(n, 0);
  std::uint32_t cur = 0;
  std::vector<std::int32_t> stack, found;

  // Backward cones per output row; the inputs they reach give the Jacobian
  // pattern (rows appended in order => row-major).
  jac_pattern_ = SparsityPattern{n_out, n_in_, {}};
  row_cone_offset_.assign(n_out + 1, 0);
  jac_row_offset_.assign(n_out + 1, 0);
  row_cone_data_.clear();
  for (int r = 0; r < n_out; ++r) {
    ++cur;
    found.clear();
    stack.push_back(outputs_[r]);
    mark[outputs_[r]] = cur;
    while (!stack.empty()) {
      const std::int32_t p = stack.back();
      stack.pop_back();
      found.push_back(p);
      const Node& nd = nodes_[p];
      if (nd.a >= 0 && mark[nd.a] != cur) { mark[nd.a] = cur; stack.push_back(nd.a); }
      if (nd.b >= 0 && mark[nd.b] != cur) { mark[nd.b] = cur; stack.push_back(nd.b); }
    }
    std::sort(found.begin(), found.end(), std::greater<>());
    row_cone_data_.insert(row_cone_data_.end(), found.begin(), found.end());
    row_cone_offset_[r + 1] = static_cast<std::int32_t>(row_cone_data_.size());
    for (auto it = found.rbegin(); it != found.rend(); ++it) {
      if (*it < n_in_) jac_pattern_.entries.emplace_back(r, *it);
    }
    jac_row_offset_[r + 1] = static_cast<std::int32_t>(jac_pattern_.entries.size());
  }

  // Forward cones per input.
  fwd_cone_offset_.assign(n_in_ + 1, 0);
  fwd_cone_data_.clear();
  for (int k = 0; k < n_in_; ++k) {
    ++cur;
    found.clear();
    stack.push_back(k);
    mark[k] = cur;
    while (!stack.empty()) {
      const std::int32_t p = stack.back();
      stack.pop_back();
      found.push_back(p);
      for (std::int32_t u = user_count[p]; u < user_count[p + 1]; ++u) {
        const std::int32_t q = users[u];
        if (mark[q] != cur) { mark[q] = cur; stack.push_back(q); }
      }
    }
    std::sort(found.begin(), found.end());
    fwd_cone_data_.insert(fwd_cone_data_.end(), found.begin(), found.end());
    fwd_cone_offset_[k + 1] = static_cast<std::int32_t>(fwd_cone_data_.size());
  }

  // Reverse-tangent node sets: backward closure of the nonlinear nodes in
  // each forward cone. The inputs inside give the Hessian column support.
  rev_set_offset_.assign(n_in_ + 1, 0);
  rev_set_data_.clear();
  std::vector<std::vector<std::int32_t>> col_rows(n_in_);
  for (int k = 0; k < n_in_; ++k) {
    ++cur;
    found.clear();
    for (std::int32_t idx = fwd_cone_offset_[k]; idx < fwd_cone_offset_[k + 1]; ++idx) {
      const std::int32_t p = fwd_cone_data_[idx];
      if (is_nonlinear(nodes_, nodes_[p]) && mark[p] != cur) {
        mark[p] = cur;
        stack.push_back(p);
      }
    }
    while (!stack.empty()) {
      const std::int32_t p = stack.back();
      stack.pop_back();
      found.push_back(p);
      const Node& nd = nodes_[p];
      if (nd.a >= 0 && mark[nd.a] != cur) { mark[nd.a] = cur; stack.push_back(nd.a); }
      if (nd.b >= 0 && mark[nd.b] != cur) { mark[nd.b] = cur; stack.push_back(nd.b); }
    }
    std::sort(found.begin(), found.end(), std::greater<>());
    rev_set_data_.insert(rev_set_data_.end(), found.begin(), found.end());
    rev_set_offset_[k + 1] = static_cast<std::int32_t>(rev_set_data_.size());
    for (auto it = found.rbegin(); it != found.rend(); ++it) {
      if (*it < n_in_ && *it >= k) col_rows[k].push_back(*it);  // lower triangle
    }
  }

  // Assemble the lower-triangle Hessian pattern, row-major, with per-column
  // write maps for the value kernels.
  hess_pattern_ = SparsityPattern{n_in_, n_in_, {}};
  for (int k = 0; k < n_in_; ++k) {
    for (std::int32_t r : col_rows[k]) hess_pattern_.entries.emplace_back(r, k);
  }
  std::sort(hess_pattern_.entries.begin(), hess_pattern_.entries.end());
  hess_col_offset_.assign(n_in_ + 1, 0);
  hess_col_entry_.assign(hess_pattern_.entries.size(), 0);
  hess_col_row_.assign(hess_pattern_.entries.size(), 0);
  {
    std::vector<std::int32_t> counts(n_in_, 0);
    for (const auto& [r, c] : hess_pattern_.entries) ++counts[c];
    for (int k = 0; k < n_in_; ++k) hess_col_offset_[k + 1] = hess_col_offset_[k] + counts[k];
    std::vector<std::int32_t> fill(hess_col_offset_.begin(), hess_col_offset_.end() - 1);
    for (std::size_t e = 0; e < hess_pattern_.entries.size(); ++e) {
      const auto& [r, c] = hess_pattern_.entries[e];
      hess_col_entry_[fill[c]] = static_cast<std::int32_t>(e);
      hess_col_row_[fill[c]] = r;
      ++fill[c];
    }
  }
}

Tape::Workspace Tape::make_workspace() const {
  Workspace ws;
  ws.val.resize(nodes_.size());
  ws.adj.resize(nodes_.size());
  ws.per_thread.resize(1);
  return ws;
}

void Tape::forward_values(std::span<const double> x, std::vector<double>& val) const {
  if (static_cast<int>(x.size()) != n_in_) throw Error("tape input has wrong dimension");
  val.resize(nodes_.size());
  const std::int32_t n = static_cast<std::int32_t>(nodes_.size());
  for (std::int32_t i = 0; i < n; ++i) {
    const Node& nd = nodes_[i];
    double v;
    if (nd.op == Op::kInput) {
      v = x[i];
    } else {
      v = eval_op(nd.op, nd.a >= 0 ? val[nd.a] : 0.0, nd.b >= 0 ? val[nd.b] : 0.0, nd.aux);
      if (!std::isfinite(v)) {
        throw EvaluationError(std::string("non-finite value in tape replay at '") +
                              op_name(nd.op) + "' node");
      }
    }
    val[i] = v;
  }
}

void Tape::forward(std::span<const double> x, std::span<double> out, Workspace& ws) const {
  forward_values(x, ws.val);
  for (int k = 0; k < num_outputs(); ++k) out[k] = ws.val[outputs_[k]];
}

std::vector<double> Tape::forward(std::span<const double> x) const {
  Workspace ws = make_workspace();
  std::vector<double> out(num_outputs());
  forward(x, out, ws);
  return out;
}

void Tape::gradient_weighted(std::span<const double> x, std::span<const double> w,
                             std::span<double> grad, Workspace& ws) const {
  forward_values(x, ws.val);
  ws.adj.assign(nodes_.size(), 0.0);
  for (int k = 0; k < num_outputs(); ++k) ws.adj[outputs_[k]] += w[k];
  const std::int32_t n = static_cast<std::int32_t>(nodes_.size());
  for (std::int32_t p = n - 1; p >= 0; --p) {
    const double ap = ws.adj[p];
    if (ap == 0.0) continue;
    const Node& nd = nodes_[p];
    if (nd.a < 0) continue;
    double da, db;
    first_partials(nd, ws.val[nd.a], nd.b >= 0 ? ws.val[nd.b] : 0.0, ws.val[p], da, db);
    ws.adj[nd.a] += ap * da;
    if (nd.b >= 0) ws.adj[nd.b] += ap * db;
  }
  for (int i = 0; i < n_in_; ++i) grad[i] = ws.adj[i];
}

void Tape::gradient(std::span<const double> x, std::span<double> grad, Workspace& ws) const {
  if (num_outputs() != 1) throw Error("gradient() requires a single-output tape");
  const double one = 1.0;
  gradient_weighted(x, std::span<const double>(&one, 1), grad, ws);
}

std::vector<double> Tape::gradient(std::span<const double> x) const {
  Workspace ws = make_workspace();
  std::vector<double> g(n_in_);
  gradient(x, g, ws);
  return g;
}

void Tape::jacobian_row(int row, const std::vector<double>& val, Scratch& scr,
                        std::span<double> values) const {
  SparseAccum adj = accum_a(scr, nodes_.size());
  adj.set(outputs_[row], 1.0);
  for (std::int32_t idx = row_cone_offset_[row]; idx < row_cone_offset_[row + 1]; ++idx) {
    const std::int32_t p = row_cone_data_[idx];
    const Node& nd = nodes_[p];
    if (nd.a < 0) continue;
    const double ap = adj.get(p);
    double da, db;
    first_partials(nd, val[nd.a], nd.b >= 0 ? val[nd.b] : 0.0, val[p], da, db);
    adj.add(nd.a, ap * da);
    if (nd.b >= 0) adj.add(nd.b, ap * db);
  }
  for (std::int32_t e = jac_row_offset_[row]; e < jac_row_offset_[row + 1]; ++e) {
    values[e] = adj.get(jac_pattern_.entries[e].second);
  }
}

void Tape::jacobian_values(std::span<const double> x, std::span<double> values,
                           Workspace& ws, int threads) const {
  if (values.size() != jac_pattern_.entries.size()) {
    throw Error("jacobian_values: output buffer size mismatch");
  }
  forward_values(x, ws.val);
  const int n_out = num_outputs();
#ifdef _OPENMP
  if (threads > 1) {
    ensure_scratch(ws, threads);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int r = 0; r < n_out; ++r) {
      jacobian_row(r, ws.val, ws.per_thread[omp_get_thread_num()], values);
    }
    return;
  }
#else
  (void)threads;
#endif
  ensure_scratch(ws, 1);
  for (int r = 0; r < n_out; ++r) jacobian_row(r, ws.val, ws.per_thread[0], values);
}

void Tape::hessian_column(int col, const std::vector<double>& val,
                          const std::vector<double>& adj, Scratch& scr,
                          std::span<double> values) const {
  if (hess_col_offset_[col] == hess_col_offset_[col + 1]) return;

  SparseAccum tan = accum_a(scr, nodes_.size());
  tan.set(col, 1.0);
  for (std::int32_t idx = fwd_cone_offset_[col]; idx < fwd_cone_offset_[col + 1]; ++idx) {
    const std::int32_t p = fwd_cone_data_[idx];
    const Node& nd = nodes_[p];
    if (nd.a < 0) continue;
    const double ta = tan.get(nd.a);
    const double tb = nd.b >= 0 ? tan.get(nd.b) : 0.0;
    tan.set(p, tangent_of(nd, val[nd.a], nd.b >= 0 ? val[nd.b] : 0.0, val[p], ta, tb));
  }

  SparseAccum adjdot = accum_b(scr, nodes_.size());
  for (std::int32_t idx = rev_set_offset_[col]; idx < rev_set_offset_[col + 1]; ++idx) {
    const std::int32_t p = rev_set_data_[idx];
    const Node& nd = nodes_[p];
    if (nd.a < 0) continue;
    const double va = val[nd.a];
    const double vb = nd.b >= 0 ? val[nd.b] : 0.0;
    const double adp = adjdot.get(p);
    const double ap = adj[p];
    double da, db, dda, ddb;
    first_partials(nd, va, vb, val[p], da, db);
    partial_tangents(nd, va, vb, val[p], tan.get(nd.a), nd.b >= 0 ? tan.get(nd.b) : 0.0,
                     dda, ddb);
    adjdot.add(nd.a, adp * da + ap * dda);
    if (nd.b >= 0) adjdot.add(nd.b, adp * db + ap * ddb);
  }

  for (std::int32_t e = hess_col_offset_[col]; e < hess_col_offset_[col + 1]; ++e) {
    values[hess_col_entry_[e]] = adjdot.get(hess_col_row_[e]);
  }
}

void Tape::hessian_values(std::span<const double> x, std::span<const double> out_weights,
                          std::span<double> values, Workspace& ws, int threads) const {
  if (values.size() != hess_pattern_.entries.size()) {
    throw Error("hessian_values: output buffer size mismatch");
  }
  forward_values(x, ws.val);
  ws.adj.assign(nodes_.size(), 0.0);
  for (int k = 0; k < num_outputs(); ++k) ws.adj[outputs_[k]] += out_weights[k];
  const std::int32_t n = static_cast<std::int32_t>(nodes_.size());
  for (std::int32_t p = n - 1; p >= 0; --p) {
    const double ap = ws.adj[p];
    if (ap == 0.0) continue;
    const Node& nd = nodes_[p];
    if (nd.a < 0) continue;
    double da, db;
    first_partials(nd, ws.val[nd.a], nd.b >= 0 ? ws.val[nd.b] : 0.0, ws.val[p], da, db);
    ws.adj[nd.a] += ap * da;
    if (nd.b >= 0) ws.adj[nd.b] += ap * db;
  }

#ifdef _OPENMP
  if (threads > 1) {
    ensure_scratch(ws, threads);
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
    for (int c = 0; c < n_in_; ++c) {
      hessian_column(c, ws.val, ws.adj, ws.per_thread[omp_get_thread_num()], values);
    }
    return;
  }
#else
  (void)threads;
#endif
  ensure_scratch(ws, 1);
  for (int c = 0; c < n_in_; ++c) hessian_column(c, ws.val, ws.adj, ws.per_thread[0], values);
}

std::vector<double> gradient(const Tape& tape, std::span<const double> point) {
  return tape.gradient(point);
}

SparseMatrix jacobian(const Tape& tape, std::span<const double> point) {
  SparseMatrix m;
  m.pattern = tape.jacobian_sparsity();
  m.values.resize(m.pattern.entries.size());
  Tape::Workspace ws = tape.make_workspace();
  tape.jacobian_values(point, m.values, ws);
  return m;
}

SparsityPattern sparsity(const Tape& tape) { return tape.jacobian_sparsity(); }

SparseMatrix hessian_lagrangian(const Tape& obj_tape, const Tape& con_tape,
                                std::span<const double> point, double obj_weight,
                                std::span<const double> multipliers) {
  if (obj_tape.num_inputs() != con_tape.num_inputs()) {
    throw Error("hessian_lagrangian: tapes disagree on the input dimension");
  }
  if (static_cast<int>(multipliers.size()) != con_tape.num_outputs()) {
    throw Error("hessian_lagrangian: multiplier count mismatch");
  }

  Tape::Workspace ws_o = obj_tape.make_workspace();
  Tape::Workspace ws_c = con_tape.make_workspace();
  std::vector<double> vo(obj_tape.hessian_sparsity().entries.size());
  std::vector<double> vc(con_tape.hessian_sparsity().entries.size());
  std::vector<double> w(static_cast<std::size_t>(obj_tape.num_outputs()), obj_weight);
  obj_tape.hessian_values(point, w, vo, ws_o);
  con_tape.hessian_values(point, multipliers, vc, ws_c);

  const auto& ea = obj_tape.hessian_sparsity().entries;
  const auto& eb = con_tape.hessian_sparsity().entries;
  SparseMatrix out;
  out.pattern.rows = obj_tape.num_inputs();
  out.pattern.cols = obj_tape.num_inputs();
  std::size_t i = 0, j = 0;
  while (i < ea.size() || j < eb.size()) {
    if (j >= eb.size() || (i < ea.size() && ea[i] < eb[j])) {
      out.pattern.entries.push_back(ea[i]);
      out.values.push_back(vo[i]);
      ++i;
    } else if (i >= ea.size() || eb[j] < ea[i]) {
      out.pattern.entries.push_back(eb[j]);
      out.values.push_back(vc[j]);
      ++j;
    } else {
      out.pattern.entries.push_back(ea[i]);
      out.values.push_back(vo[i] + vc[j]);
      ++i;
      ++j;
    }
  }
  return out;
}

std::vector<double> fd_gradient(const Tape& tape, std::span<const double> x, double step) {
  if (tape.num_outputs() != 1) throw Error("fd_gradient requires a single-output tape");
  std::vector<double> g(tape.num_inputs());
  std::vector<double> xp(x.begin(), x.end());
  Tape::Workspace ws = tape.make_workspace();
  double lo, hi;
  for (int j = 0; j < tape.num_inputs(); ++j) {
    const double x0 = xp[j];
    xp[j] = x0 + step;
    tape.forward(xp, std::span<double>(&hi, 1), ws);
    xp[j] = x0 - step;
    tape.forward(xp, std::span<double>(&lo, 1), ws);
    xp[j] = x0;
    g[j] = (hi - lo) / (2.0 * step);
  }
  return g;
}

std::vector<double> fd_jacobian(const Tape& tape, std::span<const double> x, double step) {
  const int m = tape.num_outputs();
  const int n = tape.num_inputs();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> hi(m), lo(m);
  Tape::Workspace ws = tape.make_workspace();
  for (int j = 0; j < n; ++j) {
    const double x0 = xp[j];
    xp[j] = x0 + step;
    tape.forward(xp, hi, ws);
    xp[j] = x0 - step;
    tape.forward(xp, lo, ws);
    xp[j] = x0;
    for (int r = 0; r < m; ++r) {
      out[static_cast<std::size_t>(r) * n + j] = (hi[r] - lo[r]) / (2.0 * step);
    }
  }
  return out;
}

namespace reference {

std::vector<double> jacobian_dense(const Tape& tape, std::span<const double> x) {
  const int m = tape.num_outputs();
  const int n = tape.num_inputs();
  Tape::Workspace ws = tape.make_workspace();
  std::vector<double> J(static_cast<std::size_t>(m) * n, 0.0);
  std::vector<double> w(m, 0.0);
  std::vector<double> grad(n);
  // One full reverse sweep per row.
  for (int r = 0; r < m; ++r) {
    w.assign(m, 0.0);
    w[r] = 1.0;
    tape.gradient_weighted(x, w, grad, ws);
    for (int c = 0; c < n; ++c) J[static_cast<std::size_t>(r) * n + c] = grad[c];
  }
  return J;
}

std::vector<double> hessian_dense(const Tape& tape, std::span<const double> x,
                                  std::span<const double> out_weights) {
  const auto& nodes = tape.nodes();
  const int n = tape.num_inputs();
  const std::int32_t nn = static_cast<std::int32_t>(nodes.size());
  Tape::Workspace ws = tape.make_workspace();
  std::vector<double> outs(tape.num_outputs());
  tape.forward(x, outs, ws);
  const std::vector<double>& val = ws.val;

  // Dense adjoints of the weighted output sum.
  std::vector<double> grad(n);
  tape.gradient_weighted(x, out_weights, grad, ws);
  const std::vector<double> adj = ws.adj;

  std::vector<double> H(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> tanv(nodes.size()), adjdot(nodes.size());
  for (int k = 0; k < n; ++k) {
    std::fill(tanv.begin(), tanv.end(), 0.0);
    std::fill(adjdot.begin(), adjdot.end(), 0.0);
    tanv[k] = 1.0;
    for (std::int32_t p = 0; p < nn; ++p) {
      const Node& nd = nodes[p];
      if (nd.a < 0) continue;
      tanv[p] = tangent_of(nd, val[nd.a], nd.b >= 0 ? val[nd.b] : 0.0, val[p], tanv[nd.a],
                           nd.b >= 0 ? tanv[nd.b] : 0.0);
    }
    for (std::int32_t p = nn - 1; p >= 0; --p) {
      const Node& nd = nodes[p];
      if (nd.a < 0) continue;
      const double va = val[nd.a];
      const double vb = nd.b >= 0 ? val[nd.b] : 0.0;
      double da, db, dda, ddb;
      first_partials(nd, va, vb, val[p], da, db);
      partial_tangents(nd, va, vb, val[p], tanv[nd.a], nd.b >= 0 ? tanv[nd.b] : 0.0, dda,
                       ddb);
      adjdot[nd.a] += adjdot[p] * da + adj[p] * dda;
      if (nd.b >= 0) adjdot[nd.b] += adjdot[p] * db + adj[p] * ddb;
    }
    for (int j = 0; j < n; ++j) H[static_cast<std::size_t>(j) * n + k] = adjdot[j];
  }
  return H;
}

}  // namespace reference

}  // namespace mpcc::ad
