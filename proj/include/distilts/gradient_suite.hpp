#pragma once

// Finite-difference checks over every differentiable op, objective and
// student forward, on random instances.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "distilts/fta.hpp"
#include "distilts/grad_check.hpp"
#include "distilts/losses.hpp"
#include "distilts/students.hpp"

namespace distilts {

struct GradSuiteEntry {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradSuiteOptions {
    std::size_t instances = 5;
    std::uint64_t seed = 7;
    GradCheckOptions check;
    bool include_ops = true;
};

namespace detail {

inline Array random_array(Shape shape, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Array a(std::move(shape));
    for (double& v : a.data()) v = n(rng);
    return a;
}

}  // namespace detail

inline std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> small(2, 4);
    std::vector<GradSuiteEntry> out;

    auto run = [&](const std::string& name, auto&& make_instance) {
        GradSuiteEntry e;
        e.name = name;
        for (std::size_t k = 0; k < opt.instances; ++k) {
            const GradCheckReport r = make_instance();
            e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
            e.passed = e.passed && r.passed;
            ++e.instances;
        }
        out.push_back(e);
    };

    if (opt.include_ops) {
        run("matmul", [&] {
            Array a = detail::random_array({3, 4}, rng), b = detail::random_array({4, 2}, rng);
            Array w = detail::random_array({3, 2}, rng);
            return grad_check([&](ParamBinder& p) { return sum(mul(matmul(p.bind(a), p.bind(b)), constant(w))); },
                              {&a, &b}, opt.check);
        });
        run("elementwise", [&] {
            Array a = detail::random_array({5}, rng), b = detail::random_array({5}, rng);
            Array w = detail::random_array({5}, rng);
            return grad_check(
                [&](ParamBinder& p) {
                    Var x = p.bind(a), y = p.bind(b);
                    Var v = add(mul(x, y), sub(square(x), scale(abs(y), 0.5)));
                    return sum(mul(v, constant(w)));
                },
                {&a, &b}, opt.check);
        });
        run("gelu", [&] {
            Array a = detail::random_array({6}, rng, 1.5);
            return grad_check([&](ParamBinder& p) { return sum(square(gelu(p.bind(a)))); }, {&a}, opt.check);
        });
        run("reduce", [&] {
            Array a = detail::random_array({2, 3, 4}, rng);
            Array w = detail::random_array({2, 4}, rng);
            return grad_check(
                [&](ParamBinder& p) { return sum(mul(mean(p.bind(a), {1}), constant(w))) + sum(p.bind(a)); }, {&a},
                opt.check);
        });
    }

    auto forecast_triplet = [&](std::size_t& b, std::size_t& t, std::size_t& c) {
        b = small(rng);
        t = small(rng) + 2;
        c = small(rng);
    };

    run("supervised", [&] {
        std::size_t b, t, c;
        forecast_triplet(b, t, c);
        Array yh = detail::random_array({b, t, c}, rng), y = detail::random_array({b, t, c}, rng);
        return grad_check([&](ParamBinder& p) { return supervised_loss(p.bind(yh), y); }, {&yh}, opt.check);
    });
    run("supervised_weighted", [&] {
        std::size_t b, t, c;
        forecast_triplet(b, t, c);
        Array yh = detail::random_array({b, t, c}, rng), y = detail::random_array({b, t, c}, rng);
        const HorizonWeights w = horizon_weights(2.0, t);
        return grad_check([&](ParamBinder& p) { return supervised_loss(p.bind(yh), y, &w); }, {&yh}, opt.check);
    });
    run("kd", [&] {
        std::size_t b, t, c;
        forecast_triplet(b, t, c);
        Array yh = detail::random_array({b, t, c}, rng), yt = detail::random_array({b, t, c}, rng);
        const HorizonWeights w = horizon_weights(2.0, t);
        return grad_check([&](ParamBinder& p) { return kd_loss(p.bind(yh), yt, w); }, {&yh}, opt.check);
    });
    run("fta", [&] {
        const std::size_t b = small(rng), d = small(rng), ds = small(rng), u = small(rng), t = small(rng),
                          dt = small(rng);
        FtaModule m = FtaModule::init(ds, u, t, dt, Activation::gelu, rng);
        Array h = detail::random_array({b, d, ds}, rng);
        Array target = detail::random_array({b, d, t, dt}, rng);
        return grad_check([&](ParamBinder& p) { return fta_loss(fta_forward(m, p.bind(h), p), target); },
                          {&m.w_s, &m.e, &m.w_out, &h}, opt.check);
    });
    run("t_kd", [&] {
        std::size_t b, t, c;
        forecast_triplet(b, t, c);
        Array yh = detail::random_array({b, t, c}, rng), y = detail::random_array({b, t, c}, rng);
        Array yt = detail::random_array({b, t, c}, rng);
        const TrendProjector proj{t % 2 ? t : t - 1};
        return grad_check([&](ParamBinder& p) { return tkd_loss(p.bind(yh), y, yt, proj, 0.5); }, {&yh}, opt.check);
    });
    run("fd_kd", [&] {
        std::size_t b, t, c;
        forecast_triplet(b, t, c);
        Array yh = detail::random_array({b, t, c}, rng), y = detail::random_array({b, t, c}, rng);
        Array yt = detail::random_array({b, t, c}, rng);
        return grad_check([&](ParamBinder& p) { return fdkd_loss(p.bind(yh), y, yt, 0.5, 1.0, 1.0); }, {&yh},
                          opt.check);
    });

    auto student_check = [&](StudentModel& m, std::size_t b, std::size_t c) {
        Array x = detail::random_array({b, m.lookback(), c}, rng);
        Array y = detail::random_array({b, m.horizon(), c}, rng);
        Array hw = detail::random_array({b, c, m.hidden_dim()}, rng);
        std::vector<Array*> params = m.parameters();
        return grad_check(
            [&](ParamBinder& p) {
                StudentOutput o = m.forward(x, p);
                // The hidden term keeps every path into H^S under test.
                return add(supervised_loss(o.forecast, y), mean(mul(o.hidden, constant(hw))));
            },
            params, opt.check);
    };
    run("linear_student", [&] {
        StudentConfig sc;
        sc.kind = StudentKind::linear;
        sc.lookback = small(rng) + 4;
        sc.horizon = small(rng);
        sc.trend_kernel = 3;
        StudentModel m = StudentModel::create(sc, rng);
        return student_check(m, small(rng), small(rng));
    });
    run("variate_student", [&] {
        StudentConfig sc;
        sc.kind = StudentKind::variate;
        sc.lookback = small(rng) + 2;
        sc.horizon = small(rng);
        sc.model_dim = small(rng);
        sc.ff_dim = small(rng) + 1;
        StudentModel m = StudentModel::create(sc, rng);
        return student_check(m, small(rng), small(rng));
    });
    return out;
}

}  // namespace distilts
