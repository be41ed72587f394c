#include "pmn/core.hpp"
#include "pmn/error.hpp"

#include <cmath>

namespace pmn {

FeatureMap::FeatureMap(Kind kind, int block_dim, int categories)
    : kind_(kind), block_dim_(block_dim), categories_(categories) {}

FeatureMap FeatureMap::product() { return FeatureMap(Kind::product, 1, 0); }

FeatureMap FeatureMap::squared_product() { return FeatureMap(Kind::squared_product, 1, 0); }

FeatureMap FeatureMap::kronecker_delta(int categories) {
  if (categories < 1) throw DomainError("kronecker_delta: need at least one category");
  return FeatureMap(Kind::kronecker_delta, 1, categories);
}

FeatureMap FeatureMap::table(int categories, int block_dim, std::vector<double> values) {
  if (categories < 1 || block_dim < 1) throw DomainError("feature table: empty shape");
  const auto expected = static_cast<std::size_t>(categories) * categories * block_dim;
  if (values.size() != expected) {
    throw DomainError("feature table: expected " + std::to_string(expected) + " values, got " +
                      std::to_string(values.size()));
  }
  FeatureMap f(Kind::table, block_dim, categories);
  f.table_ = std::move(values);
  for (int a = 0; a < categories && f.symmetric_; ++a) {
    for (int c = 0; c < categories && f.symmetric_; ++c) {
      for (int l = 0; l < block_dim; ++l) {
        const auto ac = (static_cast<std::size_t>(a) * categories + c) * block_dim + l;
        const auto ca = (static_cast<std::size_t>(c) * categories + a) * block_dim + l;
        if (f.table_[ac] != f.table_[ca]) {
          f.symmetric_ = false;
          break;
        }
      }
    }
  }
  return f;
}

FeatureMap FeatureMap::from_name(const std::string& name, int categories) {
  if (name == "product") return product();
  if (name == "sq" || name == "squared_product") return squared_product();
  if (name == "delta" || name == "kronecker_delta") return kronecker_delta(categories);
  throw ConfigError("unknown feature kind '" + name + "' (expected product, sq or delta)");
}

std::string FeatureMap::name() const {
  switch (kind_) {
    case Kind::product: return "product";
    case Kind::squared_product: return "sq";
    case Kind::kronecker_delta: return "delta";
    case Kind::table: return "table";
  }
  return "unknown";
}

FeatureMap FeatureMap::with_bounds(FeatureBounds b) const {
  FeatureMap copy = *this;
  copy.bounds_ = b;
  return copy;
}

int FeatureMap::code(double a) const {
  if (!(a >= 0) || a >= categories_ || a != std::floor(a)) {
    throw DomainError("feature " + name() + ": value " + std::to_string(a) + " outside categorical range [0, " +
                      std::to_string(categories_) + ")");
  }
  return static_cast<int>(a);
}

void FeatureMap::eval(double a, double c, std::span<double> out) const {
  switch (kind_) {
    case Kind::product: out[0] = a * c; return;
    case Kind::squared_product: out[0] = a * a * c * c; return;
    case Kind::kronecker_delta: out[0] = code(a) == code(c) ? 1.0 : 0.0; return;
    case Kind::table: {
      const auto base = (static_cast<std::size_t>(code(a)) * categories_ + code(c)) * block_dim_;
      for (int l = 0; l < block_dim_; ++l) out[static_cast<std::size_t>(l)] = table_[base + l];
      return;
    }
  }
}

double FeatureMap::eval_scalar(double a, double c) const {
  if (block_dim_ != 1) throw InvalidDimension("eval_scalar on a multi-dimensional feature");
  double out = 0;
  eval(a, c, {&out, 1});
  return out;
}

int FeatureMap::factor_count() const {
  switch (kind_) {
    case Kind::product:
    case Kind::squared_product: return 1;
    case Kind::kronecker_delta: return categories_;
    case Kind::table: return categories_ * block_dim_;
  }
  return 0;
}

int FeatureMap::factor_component(int q) const { return kind_ == Kind::table ? q / categories_ : 0; }

double FeatureMap::left_factor(int q, double a) const {
  switch (kind_) {
    case Kind::product: return a;
    case Kind::squared_product: return a * a;
    case Kind::kronecker_delta: return code(a) == q ? 1.0 : 0.0;
    case Kind::table: return code(a) == q % categories_ ? 1.0 : 0.0;
  }
  return 0;
}

double FeatureMap::right_factor(int q, double c) const {
  switch (kind_) {
    case Kind::product: return c;
    case Kind::squared_product: return c * c;
    case Kind::kronecker_delta: return code(c) == q ? 1.0 : 0.0;
    case Kind::table: {
      const int l = q / categories_;
      const int row = q % categories_;
      return table_[(static_cast<std::size_t>(row) * categories_ + code(c)) * block_dim_ + l];
    }
  }
  return 0;
}

}  // namespace pmn
