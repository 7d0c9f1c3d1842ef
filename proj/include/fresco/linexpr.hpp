#pragma once

// Sparse affine expressions over integer-indexed variables. Used both for
// symbolic frequency-security constraints (variable ids = quantity symbols)
// and for building conic programs (variable ids = program columns).

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fresco {

class LinExpr {
  public:
    LinExpr() = default;
    explicit LinExpr(double constant) : constant_(constant) {}

    static LinExpr term(int var, double coef) {
        LinExpr e;
        if (coef != 0.0) e.coefs_[var] = coef;
        return e;
    }

    double constant() const { return constant_; }
    double coef(int var) const {
        auto it = coefs_.find(var);
        return it == coefs_.end() ? 0.0 : it->second;
    }
    const std::map<int, double>& coefs() const { return coefs_; }
    bool is_constant() const { return coefs_.empty(); }

    LinExpr& operator+=(const LinExpr& o) {
        constant_ += o.constant_;
        for (const auto& [v, c] : o.coefs_) add_term(v, c);
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o) {
        constant_ -= o.constant_;
        for (const auto& [v, c] : o.coefs_) add_term(v, -c);
        return *this;
    }
    LinExpr& operator*=(double k) {
        constant_ *= k;
        if (k == 0.0) {
            coefs_.clear();
        } else {
            for (auto& [v, c] : coefs_) c *= k;
        }
        return *this;
    }
    LinExpr& operator+=(double k) {
        constant_ += k;
        return *this;
    }
    LinExpr& operator-=(double k) {
        constant_ -= k;
        return *this;
    }

    friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
    friend LinExpr operator*(LinExpr a, double k) { return a *= k; }
    friend LinExpr operator*(double k, LinExpr a) { return a *= k; }
    friend LinExpr operator/(LinExpr a, double k) { return a *= 1.0 / k; }
    friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

    void add_term(int var, double coef) {
        auto [it, inserted] = coefs_.try_emplace(var, coef);
        if (!inserted) {
            it->second += coef;
            if (it->second == 0.0) coefs_.erase(it);
        }
    }

    /// Evaluates the expression at the point given by `value(var)`.
    double eval(const std::function<double(int)>& value) const {
        double r = constant_;
        for (const auto& [v, c] : coefs_) r += c * value(v);
        return r;
    }

    /// Rewrites each variable through `subst(var)`, which returns the
    /// replacement expression for that variable.
    LinExpr substitute(const std::function<const LinExpr&(int)>& subst) const {
        LinExpr r(constant_);
        for (const auto& [v, c] : coefs_) r += c * subst(v);
        return r;
    }

    std::string to_string(const std::function<std::string(int)>& name) const {
        std::ostringstream os;
        bool first = true;
        for (const auto& [v, c] : coefs_) {
            if (!first) os << (c < 0 ? " - " : " + ");
            else if (c < 0) os << "-";
            first = false;
            double a = std::fabs(c);
            if (a != 1.0) os << a << "*";
            os << name(v);
        }
        if (constant_ != 0.0 || first) {
            if (!first) os << (constant_ < 0 ? " - " : " + ");
            else if (constant_ < 0) os << "-";
            os << std::fabs(constant_);
        }
        return os.str();
    }

  private:
    std::map<int, double> coefs_;
    double constant_ = 0.0;
};

}  // namespace fresco
