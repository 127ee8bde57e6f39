// Benchmark: serial reference vs OpenMP kernels on the batched loss/grad
// and gate passes. Also verifies the backends agree bit-for-bit on every
// output, which is the contract that makes the parallel path safe to use
// for training and evaluation.
//
// Usage: protogate_bench [N] [d] [t] [C] [a] [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "protogate/kernels.hpp"
#include "protogate/model.hpp"
#include "protogate/rng.hpp"

using namespace protogate;
using kernels::Backend;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_seconds();
        f();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

bool grads_equal(const Gradients& a, const Gradients& b) {
    return a.visual_head.w1 == b.visual_head.w1 && a.visual_head.b1 == b.visual_head.b1 &&
           a.visual_head.w2 == b.visual_head.w2 && a.visual_head.b2 == b.visual_head.b2 &&
           a.semantic_head.w1 == b.semantic_head.w1 && a.semantic_head.b1 == b.semantic_head.b1 &&
           a.semantic_head.w2 == b.semantic_head.w2 && a.semantic_head.b2 == b.semantic_head.b2 &&
           a.visual_prototypes == b.visual_prototypes;
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 8192;
    const std::size_t d = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 64;
    const std::size_t t = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 64;
    const std::size_t c = argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 40;
    const std::size_t a = argc > 5 ? std::strtoull(argv[5], nullptr, 10) : 32;
    const int reps = argc > 6 ? std::atoi(argv[6]) : 3;

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("batch %zu, feature_dim %zu, proto_dim %zu, classes %zu, attr_dim %zu\n", n, d,
                t, c, a);

    rng::Engine eng(1234);
    Hyperparams hp;
    hp.proto_dim = static_cast<int>(t);
    hp.lambda_pl = 0.1;
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < c; ++k) ids.push_back("c" + std::to_string(k));
    const ModelParams params = init_params(d, a, ids, hp, eng.next_u64());

    Matrix features(n, d);
    for (double& v : features.values()) v = eng.normal();
    Matrix seen_attrs(c, a);
    for (double& v : seen_attrs.values()) v = eng.normal();
    std::vector<std::size_t> rows(n);
    std::vector<int> classes(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = i;
        classes[i] = static_cast<int>(eng.below(c));
    }
    const kernels::BatchView batch{features, rows, classes};
    const kernels::BatchView gate_batch{features, rows, {}};

    std::pair<kernels::LossBreakdown, Gradients> serial_grad, parallel_grad;
    const double t_grad_serial = time_best_of(reps, [&] {
        serial_grad = kernels::batch_loss_grad(params, hp, seen_attrs, batch, Backend::serial);
    });
    const double t_grad_parallel = time_best_of(reps, [&] {
        parallel_grad = kernels::batch_loss_grad(params, hp, seen_attrs, batch, Backend::parallel);
    });
    const bool grad_ok = serial_grad.first.visual == parallel_grad.first.visual &&
                         serial_grad.first.semantic == parallel_grad.first.semantic &&
                         grads_equal(serial_grad.second, parallel_grad.second);

    std::vector<kernels::GateRecord> serial_gate, parallel_gate;
    const double t_gate_serial = time_best_of(reps, [&] {
        serial_gate = kernels::batch_gate(params, hp, seen_attrs,
                                          kernels::MatchMetric::sq_euclidean, gate_batch,
                                          Backend::serial);
    });
    const double t_gate_parallel = time_best_of(reps, [&] {
        parallel_gate = kernels::batch_gate(params, hp, seen_attrs,
                                            kernels::MatchMetric::sq_euclidean, gate_batch,
                                            Backend::parallel);
    });
    bool gate_ok = serial_gate.size() == parallel_gate.size();
    for (std::size_t i = 0; gate_ok && i < serial_gate.size(); ++i) {
        gate_ok = serial_gate[i].entropy == parallel_gate[i].entropy &&
                  serial_gate[i].seen_index == parallel_gate[i].seen_index &&
                  serial_gate[i].unseen_index == parallel_gate[i].unseen_index &&
                  serial_gate[i].visual_vec == parallel_gate[i].visual_vec &&
                  serial_gate[i].semantic_vec == parallel_gate[i].semantic_vec;
    }

    std::printf("%-16s %12s %12s %9s %s\n", "kernel", "serial (s)", "omp (s)", "speedup",
                "bit-identical");
    std::printf("%-16s %12.4f %12.4f %8.2fx %s\n", "loss+grad", t_grad_serial, t_grad_parallel,
                t_grad_serial / t_grad_parallel, grad_ok ? "yes" : "NO");
    std::printf("%-16s %12.4f %12.4f %8.2fx %s\n", "gate", t_gate_serial, t_gate_parallel,
                t_gate_serial / t_gate_parallel, gate_ok ? "yes" : "NO");
    if (!grad_ok || !gate_ok) {
        std::fprintf(stderr, "FAIL: backends disagree\n");
        return 1;
    }
    return 0;
}
