// Numerical foundations: rng streams, tensors, gemm, and finite-difference
// gradient checks for every differentiable op.
#include <algorithm>
#include <functional>
#include <set>
#include <vector>

#include "testutil.hpp"
#include "tryon/blas.hpp"
#include "tryon/nn.hpp"
#include "tryon/rng.hpp"
#include "tryon/tape.hpp"
#include "tryon/tensor.hpp"

using namespace tryon;

namespace {

Tensor<double> randn(std::vector<int64_t> shape, Rng& rng, double sd = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = sd * rng.normal();
    return t;
}

using Build = std::function<nn::Var<double>(Tape<double>&, const std::vector<nn::Var<double>>&)>;

double eval_scalar(const std::vector<Tensor<double>>& inputs, const Build& build) {
    Tape<double> tp;
    std::vector<nn::Var<double>> vars;
    for (const auto& in : inputs) vars.push_back(tp.input(in, false));
    nn::Var<double> out = build(tp, vars);
    return tp.val(out)[0];
}

// Central finite differences against the tape, all coordinates.
void gradcheck(std::vector<Tensor<double>> inputs, const Build& build, const char* name,
               double tol = 1e-6) {
    std::vector<Tensor<double>> grads;
    for (const auto& in : inputs) grads.push_back(Tensor<double>::zeros(in.shape));
    {
        Tape<double> tp;
        std::vector<nn::Var<double>> vars;
        for (size_t i = 0; i < inputs.size(); ++i)
            vars.push_back(tp.param(&inputs[i], &grads[i], true));
        nn::Var<double> out = build(tp, vars);
        tp.backward(out);
    }
    const double h = 1e-5;
    double worst = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (int64_t j = 0; j < inputs[i].numel(); ++j) {
            const double keep = inputs[i][j];
            inputs[i][j] = keep + h;
            const double fp = eval_scalar(inputs, build);
            inputs[i][j] = keep - h;
            const double fm = eval_scalar(inputs, build);
            inputs[i][j] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = grads[i][j];
            const double rel =
                std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            worst = std::max(worst, rel);
        }
    }
    if (worst > tol) {
        std::cerr << "[FAIL] gradcheck " << name << ": worst relative error " << worst
                  << " > " << tol << "\n";
        ++test_failures();
    }
}

// Scalarizes an op output through mse against a fixed target.
Build with_mse(std::function<nn::Var<double>(Tape<double>&, const std::vector<nn::Var<double>>&)> op,
               Tensor<double> target) {
    return [op = std::move(op), target = std::move(target)](
               Tape<double>& tp, const std::vector<nn::Var<double>>& vs) {
        return nn::mse_loss(tp, op(tp, vs), target);
    };
}

void naive_gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha,
                const std::vector<double>& a, const std::vector<double>& b, double beta,
                std::vector<double>& c) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0;
            for (int64_t l = 0; l < k; ++l) {
                const double av = ta ? a[size_t(l * m + i)] : a[size_t(i * k + l)];
                const double bv = tb ? b[size_t(j * k + l)] : b[size_t(l * n + j)];
                s += av * bv;
            }
            c[size_t(i * n + j)] = alpha * s + beta * c[size_t(i * n + j)];
        }
}

void test_rng() {
    Rng a(42), b(42);
    for (int i = 0; i < 200; ++i) REQUIRE(a.next_u64() == b.next_u64());
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        REQUIRE(u >= 0.0 && u < 1.0);
    }
    // serialize mid-stream, including the Box-Muller spare
    (void)a.normal();
    const std::string s = a.serialize();
    Rng c;
    c.deserialize(s);
    for (int i = 0; i < 10; ++i) REQUIRE(a.normal() == c.normal());

    Rng m(7);
    double mean = 0, var = 0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        xs[size_t(i)] = m.normal();
        mean += xs[size_t(i)];
    }
    mean /= n;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n - 1;
    REQUIRE_NEAR(mean, 0.0, 0.03);
    REQUIRE_NEAR(var, 1.0, 0.06);

    std::set<uint64_t> derived;
    for (uint64_t i = 0; i < 100; ++i) derived.insert(Rng::derive(7, i));
    REQUIRE(derived.size() == 100);

    REQUIRE(fnv1a(std::string("")) == 0xcbf29ce484222325ULL);
    REQUIRE(fnv1a(std::string("a")) == 0xaf63dc4c8601ec8cULL);
}

void test_tensor() {
    REQUIRE(Tensor<float>::count({2, 3, 4}) == 24);
    REQUIRE_THROWS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}));
    Tensor<float> t({1, 2, 2, 2});
    t.at4(0, 1, 1, 0) = 5.f;
    REQUIRE(t[6] == 5.f);
    Tensor<double> d = t.cast<double>();
    REQUIRE(d.shape == t.shape);
    REQUIRE(d[6] == 5.0);
    REQUIRE(Tensor<float>::full({3}, 2.f)[2] == 2.f);
}

void test_gemm() {
    Rng rng(11);
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            const int64_t m = 7, n = 5, k = 9;
            std::vector<double> a(size_t(m * k)), b(size_t(k * n)), c(size_t(m * n)),
                ref(size_t(m * n));
            for (auto& v : a) v = rng.normal();
            for (auto& v : b) v = rng.normal();
            for (size_t i = 0; i < c.size(); ++i) ref[i] = c[i] = rng.normal();
            naive_gemm(ta, tb, m, n, k, 1.3, a, b, 0.5, ref);
            const int64_t lda = ta ? m : k, ldb = tb ? k : n;
            blas::gemm(ta, tb, m, n, k, 1.3, a.data(), lda, b.data(), ldb, 0.5, c.data(), n);
            for (size_t i = 0; i < c.size(); ++i) REQUIRE_NEAR(c[i], ref[i], 1e-10);

            std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end());
            std::vector<float> cf(c.size(), 0.f);
            blas::gemm(ta, tb, m, n, k, 1.f, af.data(), lda, bf.data(), ldb, 0.f, cf.data(), n);
            std::vector<double> reff(c.size(), 0.0);
            naive_gemm(ta, tb, m, n, k, 1.0, a, b, 0.0, reff);
            for (size_t i = 0; i < cf.size(); ++i) REQUIRE_NEAR(cf[i], reff[i], 1e-4);
        }
}

void test_gradchecks() {
    Rng rng(3);

    gradcheck({randn({2, 3}, rng), randn({2, 3}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::add(t, v[0], v[1]); },
                       randn({2, 3}, rng)),
              "add");
    gradcheck({randn({2, 3}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::scale(t, v[0], 1.7); },
                       randn({2, 3}, rng)),
              "scale");
    gradcheck({randn({2, 3}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::swish(t, v[0]); },
                       randn({2, 3}, rng)),
              "swish");
    gradcheck({randn({1, 2, 2, 2}, rng), randn({1, 3, 2, 2}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) {
                      return nn::concat_channels(t, {v[0], v[1]});
                  },
                  randn({1, 5, 2, 2}, rng)),
              "concat_channels");
    gradcheck({randn({1, 2, 4, 4}, rng), randn({3, 2, 3, 3}, rng, 0.4), randn({3}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) { return nn::conv2d(t, v[0], v[1], v[2]); },
                  randn({1, 3, 4, 4}, rng)),
              "conv2d");
    gradcheck({randn({2, 5}, rng), randn({4, 5}, rng, 0.4), randn({4}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) { return nn::linear(t, v[0], v[1], v[2]); },
                  randn({2, 4}, rng)),
              "linear");
    gradcheck({randn({2, 4, 3, 3}, rng), randn({4}, rng), randn({4}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) {
                      return nn::group_norm(t, v[0], v[1], v[2], 2);
                  },
                  randn({2, 4, 3, 3}, rng)),
              "group_norm", 1e-5);
    gradcheck({randn({2, 3, 2, 2}, rng), randn({2, 6}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::film(t, v[0], v[1]); },
                       randn({2, 3, 2, 2}, rng)),
              "film");
    gradcheck({randn({1, 2, 4, 4}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::avg_pool2(t, v[0]); },
                       randn({1, 2, 2, 2}, rng)),
              "avg_pool2");
    gradcheck({randn({1, 2, 2, 2}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) { return nn::upsample_nearest2(t, v[0]); },
                  randn({1, 2, 4, 4}, rng)),
              "upsample_nearest2");
    gradcheck({randn({1, 3, 2, 2}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) {
                      return nn::unflatten_hw(t, nn::flatten_hw(t, v[0]), 2, 2);
                  },
                  randn({1, 3, 2, 2}, rng)),
              "flatten/unflatten");
    gradcheck({randn({2, 3, 4}, rng), randn({2, 2, 4}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) { return nn::concat_rows(t, v[0], v[1]); },
                  randn({2, 5, 4}, rng)),
              "concat_rows");
    gradcheck({randn({2, 4, 3}, rng)},
              with_mse([](Tape<double>& t, const auto& v) { return nn::mean_rows(t, v[0]); },
                       randn({2, 1, 3}, rng)),
              "mean_rows");
    gradcheck({randn({1, 3, 4}, rng), randn({1, 5, 4}, rng), randn({1, 5, 4}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) {
                      return nn::attention(t, v[0], v[1], v[2], 2);
                  },
                  randn({1, 3, 4}, rng)),
              "attention");
    auto mask = std::make_shared<Tensor<uint8_t>>(std::vector<int64_t>{1, 5});
    for (int64_t j = 0; j < 5; ++j) mask->at2(0, j) = j == 2 ? 0 : 1;
    gradcheck({randn({1, 3, 4}, rng), randn({1, 5, 4}, rng), randn({1, 5, 4}, rng)},
              with_mse(
                  [mask](Tape<double>& t, const auto& v) {
                      return nn::attention(t, v[0], v[1], v[2], 2, mask);
                  },
                  randn({1, 3, 4}, rng)),
              "attention masked");
    gradcheck({randn({2, 6}, rng)},
              with_mse(
                  [](Tape<double>& t, const auto& v) { return nn::reshape(t, v[0], {3, 4}); },
                  randn({3, 4}, rng)),
              "reshape");
    gradcheck({randn({2, 3}, rng)},
              [target = randn({2, 3}, rng)](Tape<double>& t, const auto& v) {
                  return nn::mse_loss(t, v[0], target);
              },
              "mse_loss");
}

void test_op_errors() {
    Tape<double> tp;
    auto a = tp.input(Tensor<double>({2, 3}), false);
    auto b = tp.input(Tensor<double>({3, 2}), false);
    REQUIRE_THROWS(nn::add(tp, a, b));
    auto x = tp.input(Tensor<double>({1, 3, 4, 4}), false);
    auto w = tp.input(Tensor<double>({2, 5, 3, 3}), false);
    auto bias = tp.input(Tensor<double>({2}), false);
    REQUIRE_THROWS(nn::conv2d(tp, x, w, bias));
    auto g = tp.input(Tensor<double>({3}), false);
    REQUIRE_THROWS(nn::group_norm(tp, x, g, g, 2));  // 3 % 2 != 0 affine mismatch
    auto q = tp.input(Tensor<double>({1, 2, 4}), false);
    auto k = tp.input(Tensor<double>({1, 3, 4}), false);
    REQUIRE_THROWS(nn::attention(tp, q, k, k, 3));  // C % heads
    auto fully_masked = std::make_shared<Tensor<uint8_t>>(std::vector<int64_t>{1, 3});
    REQUIRE_THROWS(nn::attention(tp, q, k, k, 2, fully_masked));
}

void test_adam() {
    ParamStore<float> store;
    int id = store.add("p", Tensor<float>::full({2}, 1.f));
    std::fill(store.at(id).grad.data.begin(), store.at(id).grad.data.end(), 1.f);
    store.adam_step(1e-2, 0.9, 0.999, 1e-8, 1);
    // bias-corrected first step moves by ~lr against the gradient
    REQUIRE_NEAR(store.at(id).value[0], 1.f - 1e-2, 1e-6);
    REQUIRE(store.total_params() == 2);
    REQUIRE(store.find("p") == id);
    REQUIRE(store.find("q") == -1);
    store.zero_grad();
    REQUIRE(store.at(id).grad[0] == 0.f);
}

void test_param_grad_accumulation() {
    // params accumulate grads across backward passes; inputs do not leak state
    Tensor<double> w({2}, {1.0, 2.0});
    Tensor<double> g = Tensor<double>::zeros({2});
    for (int pass = 0; pass < 2; ++pass) {
        Tape<double> tp;
        auto p = tp.param(&w, &g, true);
        auto l = nn::mse_loss(tp, p, Tensor<double>::zeros({2}));
        tp.backward(l);
    }
    REQUIRE_NEAR(g[0], 2.0 * 1.0, 1e-12);  // 2x the single-pass gradient w[0]
    REQUIRE_NEAR(g[1], 2.0 * 2.0, 1e-12);
}

}  // namespace

int main() {
    test_rng();
    test_tensor();
    test_gemm();
    test_gradchecks();
    test_op_errors();
    test_adam();
    test_param_grad_accumulation();
    return test_finish("test_core");
}
