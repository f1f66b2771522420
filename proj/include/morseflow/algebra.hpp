#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace morseflow::algebra {

using nlohmann::json;

// Element of the symmetric group on {1,...,kappa}. images()[j-1] is the image
// of position j. Immutable after construction.
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<int> images) : images_(std::move(images)) {
    std::vector<bool> seen(images_.size(), false);
    for (int v : images_) {
      if (v < 1 || v > static_cast<int>(images_.size()) || seen[v - 1])
        throw std::invalid_argument("Permutation: images are not a bijection of {1..kappa}");
      seen[v - 1] = true;
    }
    if (images_.empty()) throw std::invalid_argument("Permutation: kappa must be >= 1");
  }

  static Permutation identity(int kappa) {
    std::vector<int> im(kappa);
    std::iota(im.begin(), im.end(), 1);
    return Permutation(std::move(im));
  }

  int rank() const { return static_cast<int>(images_.size()); }
  int apply(int j) const {
    if (j < 1 || j > rank()) throw std::out_of_range("Permutation::apply: position out of range");
    return images_[j - 1];
  }
  const std::vector<int>& images() const { return images_; }

  Permutation inverse() const {
    std::vector<int> inv(images_.size());
    for (int j = 1; j <= rank(); ++j) inv[images_[j - 1] - 1] = j;
    return Permutation(std::move(inv));
  }

  bool is_identity() const {
    for (int j = 1; j <= rank(); ++j)
      if (images_[j - 1] != j) return false;
    return true;
  }

  bool is_transposition() const {
    int moved = 0;
    for (int j = 1; j <= rank(); ++j)
      if (images_[j - 1] != j) ++moved;
    return moved == 2;
  }

  bool operator==(const Permutation& o) const { return images_ == o.images_; }
  bool operator!=(const Permutation& o) const { return !(*this == o); }
  bool operator<(const Permutation& o) const { return images_ < o.images_; }

  std::string to_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < images_.size(); ++i) {
      if (i) os << ',';
      os << images_[i];
    }
    os << ']';
    return os.str();
  }

  json to_json() const { return json(images_); }
  static Permutation from_json(const json& j) { return Permutation(j.get<std::vector<int>>()); }

 private:
  std::vector<int> images_;
};

// result(j) = p(q(j)); q acts first.
inline Permutation compose(const Permutation& p, const Permutation& q) {
  if (p.rank() != q.rank())
    throw std::invalid_argument("compose: rank mismatch (malformed decoration)");
  std::vector<int> im(p.rank());
  for (int j = 1; j <= p.rank(); ++j) im[j - 1] = p.apply(q.apply(j));
  return Permutation(std::move(im));
}

inline Permutation transposition(int v, int w, int kappa) {
  if (!(1 <= v && v < w && w <= kappa))
    throw std::invalid_argument("transposition: need 1 <= v < w <= kappa");
  std::vector<int> im(kappa);
  std::iota(im.begin(), im.end(), 1);
  std::swap(im[v - 1], im[w - 1]);
  return Permutation(std::move(im));
}

// s_i = (i, i+1)
inline Permutation simple_transposition(int i, int kappa) { return transposition(i, i + 1, kappa); }

// Number of inversions: pairs i<j with p(i) > p(j).
inline int coxeter_length(const Permutation& p) {
  int n = p.rank(), inv = 0;
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n; ++j)
      if (p.apply(i) > p.apply(j)) ++inv;
  return inv;
}

inline std::vector<Permutation> all_permutations(int kappa) {
  std::vector<int> im(kappa);
  std::iota(im.begin(), im.end(), 1);
  std::vector<Permutation> out;
  do {
    out.push_back(Permutation(im));
  } while (std::next_permutation(im.begin(), im.end()));
  return out;
}

// Reduced word w = s_{a_1} s_{a_2} ... s_{a_l}, chosen greedily by the
// smallest left descent. Any reduced word gives the same Hecke product.
inline std::vector<int> reduced_word_left(Permutation w) {
  std::vector<int> word;
  Permutation winv = w.inverse();
  while (!w.is_identity()) {
    int i = 0;
    for (int k = 1; k < w.rank(); ++k)
      if (winv.apply(k) > winv.apply(k + 1)) {
        i = k;
        break;
      }
    if (i == 0) throw std::logic_error("reduced_word_left: no descent in non-identity element");
    word.push_back(i);
    w = compose(simple_transposition(i, w.rank()), w);
    winv = w.inverse();
  }
  return word;
}

// Alternative factorization by right descents, used to cross-check that the
// product is independent of the word choice.
inline std::vector<int> reduced_word_right(Permutation w) {
  std::vector<int> word;
  while (!w.is_identity()) {
    int i = 0;
    for (int k = 1; k < w.rank(); ++k)
      if (w.apply(k) > w.apply(k + 1)) {
        i = k;
        break;
      }
    if (i == 0) throw std::logic_error("reduced_word_right: no descent in non-identity element");
    word.insert(word.begin(), i);
    w = compose(w, simple_transposition(i, w.rank()));
  }
  return word;
}

// Truncated formal power series over F2 in hbar: coefficients of h^0..h^N,
// arithmetic mod 2 and mod h^{N+1}.
class HbarSeries {
 public:
  HbarSeries() = default;
  explicit HbarSeries(int truncation) : c_(truncation + 1, 0) {
    if (truncation < 0) throw std::invalid_argument("HbarSeries: truncation must be >= 0");
  }
  HbarSeries(std::vector<std::uint8_t> coeffs) : c_(std::move(coeffs)) {
    if (c_.empty()) throw std::invalid_argument("HbarSeries: empty coefficient list");
    for (auto& b : c_) b &= 1;
  }

  static HbarSeries zero(int N) { return HbarSeries(N); }
  static HbarSeries one(int N) {
    HbarSeries s(N);
    s.c_[0] = 1;
    return s;
  }
  static HbarSeries hbar_power(int k, int N) {
    HbarSeries s(N);
    if (k <= N) s.c_[k] = 1;
    return s;
  }

  int truncation() const { return static_cast<int>(c_.size()) - 1; }
  std::uint8_t coeff(int k) const { return k <= truncation() ? c_[k] : 0; }
  bool is_zero() const {
    for (auto b : c_)
      if (b) return false;
    return true;
  }

  bool operator==(const HbarSeries& o) const { return c_ == o.c_; }
  bool operator!=(const HbarSeries& o) const { return !(*this == o); }

  std::string to_string() const {
    std::ostringstream os;
    bool first = true;
    for (int k = 0; k <= truncation(); ++k) {
      if (!c_[k]) continue;
      if (!first) os << " + ";
      if (k == 0)
        os << "1";
      else if (k == 1)
        os << "h";
      else
        os << "h^" << k;
      first = false;
    }
    if (first) os << "0";
    return os.str();
  }

  json to_json() const { return json(c_); }
  static HbarSeries from_json(const json& j) {
    return HbarSeries(j.get<std::vector<std::uint8_t>>());
  }

  friend HbarSeries series_add(const HbarSeries& a, const HbarSeries& b);
  friend HbarSeries series_mul(const HbarSeries& a, const HbarSeries& b);

 private:
  std::vector<std::uint8_t> c_;
};

inline void require_same_truncation(const HbarSeries& a, const HbarSeries& b) {
  if (a.truncation() != b.truncation())
    throw std::invalid_argument("HbarSeries: truncation mismatch");
}

inline HbarSeries series_add(const HbarSeries& a, const HbarSeries& b) {
  require_same_truncation(a, b);
  HbarSeries r(a.truncation());
  for (int k = 0; k <= a.truncation(); ++k) r.c_[k] = a.c_[k] ^ b.c_[k];
  return r;
}

inline HbarSeries series_mul(const HbarSeries& a, const HbarSeries& b) {
  require_same_truncation(a, b);
  HbarSeries r(a.truncation());
  for (int i = 0; i <= a.truncation(); ++i) {
    if (!a.c_[i]) continue;
    for (int j = 0; i + j <= a.truncation(); ++j) r.c_[i + j] ^= (a.c_[i] & b.c_[j]);
  }
  return r;
}

// Element of the Hecke algebra H_kappa over Z2[h]/(h^{N+1}) in the T_w basis.
class HeckeElement {
 public:
  HeckeElement() = default;
  HeckeElement(int rank, int truncation) : rank_(rank), truncation_(truncation) {}

  static HeckeElement basis(const Permutation& w, int truncation) {
    HeckeElement e(w.rank(), truncation);
    e.terms_.emplace(w, HbarSeries::one(truncation));
    return e;
  }
  static HeckeElement zero(int rank, int truncation) { return HeckeElement(rank, truncation); }
  static HeckeElement unit(int rank, int truncation) {
    return basis(Permutation::identity(rank), truncation);
  }

  int rank() const { return rank_; }
  int truncation() const { return truncation_; }
  const std::map<Permutation, HbarSeries>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  HbarSeries coeff(const Permutation& w) const {
    auto it = terms_.find(w);
    return it == terms_.end() ? HbarSeries::zero(truncation_) : it->second;
  }

  void add_term(const Permutation& w, const HbarSeries& c) {
    if (w.rank() != rank_) throw std::invalid_argument("HeckeElement: rank mismatch");
    if (c.truncation() != truncation_)
      throw std::invalid_argument("HeckeElement: truncation mismatch");
    auto it = terms_.find(w);
    if (it == terms_.end()) {
      if (!c.is_zero()) terms_.emplace(w, c);
    } else {
      it->second = series_add(it->second, c);
      if (it->second.is_zero()) terms_.erase(it);
    }
  }

  bool operator==(const HeckeElement& o) const {
    return rank_ == o.rank_ && truncation_ == o.truncation_ && terms_ == o.terms_;
  }
  bool operator!=(const HeckeElement& o) const { return !(*this == o); }

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [w, c] : terms_) {
      if (!first) os << " + ";
      os << "(" << c.to_string() << ")*T" << w.to_string();
      first = false;
    }
    return os.str();
  }

  // Sorted lexicographically by permutation (map order) for deterministic output.
  json to_json() const {
    json arr = json::array();
    for (const auto& [w, c] : terms_) arr.push_back({{"perm", w.to_json()}, {"series", c.to_json()}});
    return arr;
  }
  static HeckeElement from_json(const json& j, int rank, int truncation) {
    HeckeElement e(rank, truncation);
    for (const auto& t : j)
      e.add_term(Permutation::from_json(t.at("perm")), HbarSeries::from_json(t.at("series")));
    return e;
  }

 private:
  int rank_ = 0;
  int truncation_ = 0;
  std::map<Permutation, HbarSeries> terms_;
};

inline HeckeElement hecke_add(const HeckeElement& a, const HeckeElement& b) {
  if (a.rank() != b.rank() || a.truncation() != b.truncation())
    throw std::invalid_argument("hecke_add: rank/truncation mismatch");
  HeckeElement r = a;
  for (const auto& [w, c] : b.terms()) r.add_term(w, c);
  return r;
}

inline HeckeElement hecke_scale(const HbarSeries& s, const HeckeElement& a) {
  HeckeElement r(a.rank(), a.truncation());
  for (const auto& [w, c] : a.terms()) r.add_term(w, series_mul(s, c));
  return r;
}

// Left multiplication by T_{s_i}: T_s T_w = T_{sw} if l(sw) > l(w),
// else T_{sw} + h T_w.
inline HeckeElement hecke_mul_simple_left(int i, const HeckeElement& a) {
  HeckeElement r(a.rank(), a.truncation());
  const Permutation s = simple_transposition(i, a.rank());
  const HbarSeries h = HbarSeries::hbar_power(1, a.truncation());
  for (const auto& [w, c] : a.terms()) {
    Permutation sw = compose(s, w);
    r.add_term(sw, c);
    if (coxeter_length(sw) < coxeter_length(w)) r.add_term(w, series_mul(h, c));
  }
  return r;
}

// Normal-form product: factor the left operand's basis words into simple
// reflections along a reduced word and apply them one at a time.
inline HeckeElement hecke_mul(const HeckeElement& a, const HeckeElement& b) {
  if (a.rank() != b.rank() || a.truncation() != b.truncation())
    throw std::invalid_argument("hecke_mul: rank/truncation mismatch");
  HeckeElement out(a.rank(), a.truncation());
  for (const auto& [u, cu] : a.terms()) {
    std::vector<int> word = reduced_word_left(u);
    HeckeElement acc = b;
    for (auto it = word.rbegin(); it != word.rend(); ++it)
      acc = hecke_mul_simple_left(*it, acc);
    out = hecke_add(out, hecke_scale(cu, acc));
  }
  return out;
}

struct RelationReport {
  bool ok = true;
  std::vector<std::string> failures;
  int checks = 0;
};

// Exhaustive check of the defining relations under hecke_mul:
// T_i^2 = 1 + h T_i, far commutation, braid relations.
inline RelationReport hecke_verify_relations(int kappa, int truncation) {
  if (kappa < 2) throw std::invalid_argument("hecke_verify_relations: kappa must be >= 2");
  RelationReport rep;
  auto T = [&](int i) { return HeckeElement::basis(simple_transposition(i, kappa), truncation); };
  const HeckeElement one = HeckeElement::unit(kappa, truncation);
  const HbarSeries h = HbarSeries::hbar_power(1, truncation);
  for (int i = 1; i < kappa; ++i) {
    HeckeElement lhs = hecke_mul(T(i), T(i));
    HeckeElement rhs = hecke_add(one, hecke_scale(h, T(i)));
    ++rep.checks;
    if (lhs != rhs) {
      rep.ok = false;
      rep.failures.push_back("quadratic relation fails at i=" + std::to_string(i));
    }
  }
  for (int i = 1; i < kappa; ++i)
    for (int j = i + 2; j < kappa; ++j) {
      ++rep.checks;
      if (hecke_mul(T(i), T(j)) != hecke_mul(T(j), T(i))) {
        rep.ok = false;
        rep.failures.push_back("far commutation fails at (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
      }
    }
  for (int i = 1; i + 1 < kappa; ++i) {
    ++rep.checks;
    HeckeElement lhs = hecke_mul(T(i), hecke_mul(T(i + 1), T(i)));
    HeckeElement rhs = hecke_mul(T(i + 1), hecke_mul(T(i), T(i + 1)));
    if (lhs != rhs) {
      rep.ok = false;
      rep.failures.push_back("braid relation fails at i=" + std::to_string(i));
    }
  }
  return rep;
}

}  // namespace morseflow::algebra
