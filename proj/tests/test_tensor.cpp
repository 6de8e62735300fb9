#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "stackelgrad/errors.hpp"
#include "stackelgrad/optim.hpp"
#include "stackelgrad/param_vector.hpp"
#include "stackelgrad/rng.hpp"
#include "stackelgrad/tensor.hpp"

using namespace stackelgrad;

TEST_CASE("tensor construction and accessors") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 7.0;
    CHECK(t.data[5] == 7.0);
    CHECK(t.shape_str() == "[2,3]");

    Tensor s = Tensor::scalar(4.5);
    CHECK(s.is_scalar());
    CHECK(s.scalar_value() == 4.5);
    CHECK_THROWS_AS(t.scalar_value(), ContractError);

    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);

    Tensor f = Tensor::full({4}, -2.0);
    CHECK(linf_norm(f) == 2.0);
    CHECK(l2_norm(f) == doctest::Approx(4.0));

    Tensor bad = Tensor::scalar(std::nan(""));
    CHECK_FALSE(bad.all_finite());
}

TEST_CASE("rng determinism and stream independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

    Rng c(42), d(43);
    bool differs = false;
    for (int i = 0; i < 10; ++i)
        if (c.uniform() != d.uniform()) differs = true;
    CHECK(differs);

    // Children are decorrelated from the parent and from each other.
    Rng parent(7);
    Rng c0 = parent.child(0), c1 = parent.child(1);
    CHECK(c0.seed() != c1.seed());
    CHECK(c0.seed() != parent.seed());

    // child() is a pure function of (seed, index): no draw state involved.
    Rng parent2(7);
    parent2.uniform();
    CHECK(parent2.child(0).seed() == c0.seed());
}

TEST_CASE("rng distribution ranges and moments") {
    Rng r(123);
    double lo = 1.0, hi = 0.0, sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

    double mean = 0.0, var = 0.0;
    std::vector<double> zs(n);
    for (int i = 0; i < n; ++i) {
        zs[i] = r.normal();
        mean += zs[i];
    }
    mean /= n;
    for (double z : zs) var += (z - mean) * (z - mean);
    var /= n - 1;
    CHECK(mean == doctest::Approx(0.0).epsilon(0.05));
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));

    for (int i = 0; i < 1000; ++i) {
        std::uint64_t v = r.integer(7);
        CHECK(v < 7);
    }
}

TEST_CASE("rng shuffle is a permutation") {
    Rng r(9);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> orig = v;
    r.shuffle(v);
    CHECK(std::set<int>(v.begin(), v.end()) == std::set<int>(orig.begin(), orig.end()));
    CHECK(v != orig);  // ten elements: identity permutation would be a 1/10! fluke
}

TEST_CASE("param vector flatten round trip and arithmetic") {
    ParamVector p({Tensor({2, 2}, {1, 2, 3, 4}), Tensor({3}, {5, 6, 7})});
    CHECK(p.count() == 2);
    CHECK(p.size() == 7);

    std::vector<double> flat = p.flatten();
    CHECK(flat == std::vector<double>{1, 2, 3, 4, 5, 6, 7});

    ParamVector q = p.zeros_like();
    CHECK(q.same_layout(p));
    q.unflatten(flat);
    CHECK(q.flatten() == flat);
    CHECK_THROWS_AS(q.unflatten(std::vector<double>(3, 0.0)), ContractError);

    ParamVector r = p.zeros_like();
    r.add_scaled(p, 2.0);
    CHECK(r.flatten() == std::vector<double>{2, 4, 6, 8, 10, 12, 14});
    r.scale(0.5);
    CHECK(r.flatten() == p.flatten());

    CHECK(p.dot(p) == doctest::Approx(1 + 4 + 9 + 16 + 25 + 36 + 49));
    CHECK(p.norm2_sq() == doctest::Approx(140.0));
    CHECK(p.linf() == 7.0);
    CHECK(p.all_finite());

    ParamVector joined = ParamVector::concat(p, q);
    CHECK(joined.count() == 4);
    CHECK(joined.size() == 14);

    ParamVector other({Tensor({2}, {0, 0})});
    CHECK_FALSE(other.same_layout(p));
    CHECK_THROWS_AS(p.dot(other), ContractError);
}

TEST_CASE("sgd with momentum and weight decay matches hand-run updates") {
    // lr 0.1, momentum 0.9, decay 0.01, theta0 = 1, raw gradient 0.5 twice:
    //   g = 0.5 + 0.01 * theta; v = 0.9 v + g; theta -= 0.1 v
    ParamVector theta({Tensor::scalar(1.0)});
    ParamVector grad({Tensor::scalar(0.5)});
    Sgd opt(0.1, 0.9, 0.01);
    opt.step(theta, grad);
    CHECK(theta[0][0] == doctest::Approx(0.94899999999999995).epsilon(1e-15));
    opt.step(theta, grad);
    CHECK(theta[0][0] == doctest::Approx(0.85215099999999988).epsilon(1e-15));

    Sgd plain(0.5);
    ParamVector t2({Tensor::scalar(2.0)});
    plain.step(t2, grad);
    CHECK(t2[0][0] == 1.75);  // 2 - 0.5*0.5, no momentum, no decay

    plain.set_lr(0.25);
    CHECK(plain.lr() == 0.25);
}

TEST_CASE("adam first step has the bias-corrected magnitude") {
    // First step reduces to lr * g / (|g| + eps) regardless of g's scale.
    ParamVector theta({Tensor::scalar(0.0)});
    ParamVector grad({Tensor::scalar(2.0)});
    Adam opt(0.1);
    opt.step(theta, grad);
    CHECK(theta[0][0] == doctest::Approx(-0.099999999500000006).epsilon(1e-15));

    // Opposite sign moves the other way with the same magnitude.
    ParamVector theta2({Tensor::scalar(0.0)});
    ParamVector grad2({Tensor::scalar(-1e-3)});
    Adam opt2(0.1);
    opt2.step(theta2, grad2);
    CHECK(theta2[0][0] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("adam converges on a quadratic") {
    ParamVector theta({Tensor::scalar(5.0)});
    Adam opt(0.05);
    for (int i = 0; i < 2000; ++i) {
        ParamVector g({Tensor::scalar(2.0 * (theta[0][0] - 3.0))});
        opt.step(theta, g);
    }
    CHECK(theta[0][0] == doctest::Approx(3.0).epsilon(1e-6));
}
