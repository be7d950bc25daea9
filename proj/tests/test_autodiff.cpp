#include <cmath>
#include <unordered_map>

#include "doctest.h"
#include "json.hpp"
#include "prior/autodiff.hpp"
#include "prior/nn.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace prior;
using ad::Tensor;
using testing::grad_check;

TEST_SUITE("autodiff") {

TEST_CASE("matmul examples") {
    auto eye = Tensor({2, 2}, {1, 0, 0, 1});
    auto b = Tensor({2, 1}, {3, 4});
    CHECK(ad::matmul(eye, b).values() == std::vector<double>{3, 4});

    auto zero = Tensor::zeros(2, 2);
    auto c = Tensor({2, 3}, {1, -2, 3, 4, 5, -6});
    const auto product = ad::matmul(zero, c);
    for (double v : product.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(ad::matmul(c, c), std::invalid_argument);
}

TEST_CASE("matmul gradient against finite differences") {
    auto rng = nn::make_rng(1, "test");
    auto a = Tensor({3, 4}, testing::random_vector(12, rng), true);
    auto b = Tensor({4, 2}, testing::random_vector(8, rng), true);
    auto r = grad_check([&] { return ad::sum(ad::matmul(a, b)); }, {a, b});
    CHECK(r.checked == 20);
    CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("softmax examples") {
    auto u = ad::softmax(Tensor::row({0, 0, 0}), 1).values();
    for (double v : u) CHECK(v == doctest::Approx(1.0 / 3));

    auto p = ad::softmax(Tensor::row({std::log(2.0), 0}), 1).values();
    CHECK(p[0] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto big = ad::softmax(Tensor::row({1000, 0}), 1).values();
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] == doctest::Approx(0.0));

    // axis 0 normalizes columns
    auto cols = ad::softmax(Tensor({2, 2}, {0, 1, 0, 1}), 0).values();
    CHECK(cols[0] == doctest::Approx(0.5));
    CHECK(cols[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax and log_softmax gradients") {
    auto rng = nn::make_rng(2, "test");
    auto x = Tensor({2, 5}, testing::random_vector(10, rng), true);
    auto w = Tensor({2, 5}, testing::random_vector(10, rng));
    for (int axis : {0, 1}) {
        CHECK(grad_check([&] { return ad::sum(ad::mul(ad::softmax(x, axis), w)); }, {x}).max_rel <= 1e-4);
        CHECK(grad_check([&] { return ad::sum(ad::mul(ad::log_softmax(x, axis), w)); }, {x}).max_rel <= 1e-4);
    }
}

TEST_CASE("kl divergence examples") {
    CHECK(ad::kl_divergence(Tensor::row({0.5, 0.5}), Tensor::row({0.5, 0.5})).item() == doctest::Approx(0.0));
    CHECK(ad::kl_divergence(Tensor::row({1, 0}), Tensor::row({0.5, 0.5})).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto rng = nn::make_rng(3, "test");
    for (int i = 0; i < 20; ++i) {
        auto p = testing::softmax_oracle(testing::random_vector(6, rng));
        auto q = testing::softmax_oracle(testing::random_vector(6, rng));
        const double got = ad::kl_divergence(Tensor::row(p), Tensor::row(q)).item();
        CHECK(std::abs(got - testing::kl_oracle(p, q)) <= 1e-10);
    }
}

TEST_CASE("kl gradient reaches both arguments") {
    auto rng = nn::make_rng(4, "test");
    auto a = Tensor::row(testing::random_vector(5, rng), true);
    auto b = Tensor::row(testing::random_vector(5, rng), true);
    auto r = grad_check([&] { return ad::kl_divergence(ad::softmax(a, 1), ad::softmax(b, 1)); }, {a, b});
    CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("elementwise and shape ops gradients") {
    auto rng = nn::make_rng(5, "test");
    auto a = Tensor({3, 4}, testing::random_vector(12, rng), true);
    auto b = Tensor({3, 4}, testing::random_vector(12, rng), true);
    auto bias = Tensor::row(testing::random_vector(4, rng), true);
    auto loss = [&] {
        auto x = ad::add_row(ad::mul(ad::tanh(a), ad::sub(b, ad::scale(a, 0.3))), bias);
        auto top = ad::slice_rows(x, 0, 2);
        auto stacked = ad::concat_rows({top, ad::mean_rows(x)});
        auto wide = ad::concat_cols({stacked, ad::transpose(ad::mean_rows(ad::transpose(stacked)))});
        auto corner = ad::reshape(ad::element(x, 1, 2), 1, 1);
        return ad::add(ad::add(ad::mean(ad::add_scalar(wide, 0.7)), ad::sum(ad::mul(wide, wide))), ad::tanh(corner));
    };
    CHECK(grad_check(loss, {a, b, bias}).max_rel <= 1e-4);

    auto p = Tensor({2, 3}, testing::random_vector(6, rng), true);
    auto t = Tensor({2, 3}, testing::random_vector(6, rng));
    CHECK(grad_check([&] { return ad::mse(p, t); }, {p}).max_rel <= 1e-4);
}

TEST_CASE("scalar passthrough and tanh at zero") {
    auto x = Tensor::scalar(0.0, true);
    ad::backward(ad::sum(x));
    CHECK(x.grad()[0] == 1.0);
    x.zero_grad();
    ad::backward(ad::tanh(x));
    CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("composite attention net: parameter and input gradients") {
    auto rng = nn::make_rng(6, "test");
    nn::Linear embed(5, 4, rng), head(4, 2, rng);
    auto wq = nn::xavier_uniform(4, 4, rng), wk = nn::xavier_uniform(4, 4, rng), wv = nn::xavier_uniform(4, 4, rng);
    auto input = Tensor({3, 5}, testing::random_vector(15, rng), true);
    auto loss = [&] {
        auto h = ad::tanh(embed(input));
        auto scores = ad::scale(ad::matmul(ad::matmul(h, wq), ad::transpose(ad::matmul(h, wk))), 0.5);
        auto ctx = ad::matmul(ad::softmax(scores, 1), ad::matmul(h, wv));
        return ad::sum(ad::tanh(head(ad::mean_rows(ctx))));
    };
    auto r = grad_check(loss, {embed.weight, embed.bias, wq, wk, wv, head.weight, head.bias, input});
    CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("non-scalar loss is rejected") {
    auto x = Tensor::row({1, 2}, true);
    CHECK_THROWS_AS(ad::backward(ad::scale(x, 2)), std::invalid_argument);
}

TEST_CASE("leaf gradients accumulate, interior gradients do not") {
    auto x = Tensor::scalar(2.0, true);
    auto y = ad::scale(x, 3.0);
    ad::backward(y);
    ad::backward(y);
    CHECK(x.grad()[0] == 6.0);
    CHECK(y.grad()[0] == 1.0);
}

TEST_CASE("tape is topologically ordered") {
    auto rng = nn::make_rng(7, "test");
    nn::Linear l(3, 3, rng);
    auto x = Tensor({2, 3}, testing::random_vector(6, rng), true);
    auto loss = ad::sum(ad::tanh(l(ad::tanh(l(x)))));
    auto tape = ad::Tape::record(loss);
    std::unordered_map<const ad::Node*, std::size_t> pos;
    for (std::size_t i = 0; i < tape.nodes().size(); ++i) pos[tape.nodes()[i].get()] = i;
    CHECK(tape.nodes().back() == loss.node());
    for (std::size_t i = 0; i < tape.nodes().size(); ++i)
        for (const auto& p : tape.nodes()[i]->parents)
            if (p->requires_grad) CHECK(pos.at(p.get()) < i);

    auto doc = nlohmann::json::parse(tape.to_json());
    REQUIRE(doc.size() == tape.nodes().size());
    CHECK(doc.back()["op"] == loss.op());
}

TEST_CASE("backward is bitwise deterministic") {
    auto run = [] {
        auto rng = nn::make_rng(8, "test");
        nn::Linear l(6, 6, rng);
        auto x = Tensor({4, 6}, testing::random_vector(24, rng), true);
        ad::backward(ad::sum(ad::softmax(ad::tanh(l(x)), 1)));
        auto g = l.weight.grad();
        g.insert(g.end(), x.grad().begin(), x.grad().end());
        return g;
    };
    CHECK(run() == run());
}

TEST_CASE("sgd") {
    auto p = Tensor::scalar(1.0, true);
    p.mutable_grad() = {0.5};
    nn::Sgd(std::vector<Tensor>{p}, 0.1).step();
    CHECK(p.item() == doctest::Approx(0.95).epsilon(1e-15));

    auto q = Tensor::scalar(1.0, true);
    q.mutable_grad() = {0.0};
    nn::Sgd(std::vector<Tensor>{q}, 0.1).step();
    CHECK(q.item() == 1.0);
}

TEST_CASE("adam follows the hand-stepped recurrence") {
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::vector<double> grads{0.5, -1.5, 2.0};
    auto p = Tensor::scalar(1.0, true);
    nn::Adam adam({p}, {lr, b1, b2, eps});

    double oracle = 1.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        oracle -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

        p.mutable_grad() = {g};
        adam.step();
        CHECK(p.item() == doctest::Approx(oracle).epsilon(1e-14));
        CHECK(p.grad()[0] == 0.0);
    }
}

TEST_CASE("optimizers refuse non-finite gradients") {
    auto p = Tensor::scalar(1.0, true);
    p.mutable_grad() = {std::nan("")};
    nn::Adam adam({p}, {});
    CHECK_THROWS(adam.step());
    CHECK(p.item() == 1.0);
}

TEST_CASE("softmax and kl properties") {
    auto s = testing::prop_softmax_simplex(1000, 11);
    CHECK_MESSAGE(s.ok(), s.first_failure);
    auto k = testing::prop_kl_nonnegative(1000, 12);
    CHECK_MESSAGE(k.ok(), k.first_failure);
}

TEST_CASE("checkpoint round trip") {
    auto rng = nn::make_rng(9, "test");
    nn::Linear a(3, 2, rng), b(3, 2, rng);
    nn::NamedParameters pa{{"w", a.weight}, {"b", a.bias}}, pb{{"w", b.weight}, {"b", b.bias}};
    auto doc = nn::checkpoint_json("linear", {{"note", "x"}}, pa);
    nn::load_checkpoint(doc, "linear", pb);
    CHECK(b.weight.values() == a.weight.values());
    CHECK(b.bias.values() == a.bias.values());
    CHECK_THROWS(nn::load_checkpoint(doc, "other", pb));
    nn::Linear c(2, 2, rng);
    CHECK_THROWS(nn::load_checkpoint(doc, "linear", {{"w", c.weight}, {"b", c.bias}}));
}

TEST_CASE("named rng streams are independent and reproducible") {
    auto a = nn::make_rng(3, "alpha"), a2 = nn::make_rng(3, "alpha"), b = nn::make_rng(3, "beta");
    const auto x = a(), y = a2(), z = b();
    CHECK(x == y);
    CHECK(x != z);
}

}
