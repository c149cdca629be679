// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include <Eigen/Eigenvalues>

#include "checkpoint_fixture.hpp"
#include "cli_runner.hpp"
#include "expansion_fixture.hpp"
#include "helpers.hpp"
#include "safer/safer.hpp"

using namespace safer;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

SyntheticSpec default_spec(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.d = 64;
    spec.n = 128;
    spec.sigma_alpha = 1.0;
    spec.object_scale = 0.1;
    spec.noise_scale = 0.1;
    spec.seed = seed;
    return spec;
}

Outcome planted_recovery() {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    double worst = 1.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = generate(default_spec(seed));
        worst = std::min(worst, testing::abs_cos(identify_subspace(s.embeddings, 1).basis.col(0), s.v_c));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(worst >= 0.99, "a seed fell below 0.99");
    o.require(secs < 5.0, "took longer than 5 s");
    o.detail += " min |cos| = " + std::to_string(worst) + ", " + std::to_string(secs) + " s";
    return o;
}

Outcome spectrum_dominance() {
    Outcome o;
    double worst = 1e300;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto b = identify_subspace(generate(default_spec(seed)).embeddings, 1);
        worst = std::min(worst, b.explained_variance_ratio(0) / b.explained_variance_ratio(1));
    }
    o.require(worst >= 5, "ratio below 5");
    o.detail += " min ratio[0]/ratio[1] = " + std::to_string(worst);
    return o;
}

Outcome projector_algebra() {
    Outcome o;
    safer::Rng rng(1000);
    double idem = 0, annihilate = 0, complement = 0, spectrum = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = 2 + static_cast<Eigen::Index>(rng.uniform() * 63);  // 2..64
        const auto k = 1 + static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(std::min<Eigen::Index>(4, d - 1)));
        ConceptBasis basis;
        basis.basis = testing::random_orthonormal(rng, d, k);
        const auto& u = basis.basis;
        const double lambda = 0.25 + 2 * rng.uniform();
        const auto remove = removal_projector(basis);
        const auto amplify = amplify_projector(basis, lambda);
        const Eigen::MatrixXd& p = remove.matrix;

        idem = std::max(idem, max_abs(p * p - p));
        annihilate = std::max(annihilate, max_abs(p * u));
        Eigen::VectorXd x = testing::gaussian(rng, d, 1);
        x -= u * (u.transpose() * x);
        x -= u * (u.transpose() * x);
        complement = std::max({complement, (p * x - x).cwiseAbs().maxCoeff(), (amplify.matrix * x - x).cwiseAbs().maxCoeff()});

        if (d <= 32) {
            const auto removed = oracle::jacobi_eigen(testing::to_rows(p));
            const auto amplified = oracle::jacobi_eigen(testing::to_rows(amplify.matrix));
            for (Eigen::Index i = 0; i < d; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                const double want_remove = i < d - k ? 1.0 : 0.0;
                const double want_amplify = i < k ? 1.0 + lambda : 1.0;
                spectrum = std::max({spectrum, std::abs(removed.values[idx] - want_remove),
                                     std::abs(amplified.values[idx] - want_amplify)});
            }
        }
    }
    o.require(idem <= 1e-9, "idempotence");
    o.require(annihilate <= 1e-10, "annihilation");
    o.require(complement <= 1e-12, "complement preservation");
    o.require(spectrum <= 1e-9, "eigenvalue sets");
    char buf[200];
    std::snprintf(buf, sizeof buf, " |P^2-P|=%.1e |PU|=%.1e complement=%.1e eig=%.1e", idem, annihilate, complement,
                  spectrum);
    o.detail += buf;
    return o;
}

Outcome end_to_end_erasure() {
    Outcome o;
    double worst_cos = 0;
    int reduced = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = generate(default_spec(seed));
        const auto before = identify_subspace(s.embeddings, 1);
        const auto after = identify_subspace(apply(removal_projector(before), s.embeddings), 1);
        worst_cos = std::max(worst_cos, testing::abs_cos(after.basis.col(0), s.v_c));
        if (after.explained_variance_ratio(0) < before.explained_variance_ratio(0)) ++reduced;
    }
    o.require(worst_cos <= 0.3, "residual alignment above 0.3");
    o.require(reduced == 20, "ratio[0] not reduced on every seed");
    o.detail += " max residual |cos| = " + std::to_string(worst_cos) + ", reduced " + std::to_string(reduced) + "/20";
    return o;
}

Outcome expansion_gate() {
    Outcome o;
    const auto fx = testing::make_expansion_fixture();
    const auto result = expand(fx.anchor_basis, fx.anchor_feature, fx.candidates, {.tau = fx.tau});
    for (std::size_t i = 0; i < fx.candidates.size(); ++i) {
        o.require(result.log[i].admitted == fx.expected_admitted[i], "wrong admission for " + result.log[i].label);
        const double norm = (result.projector.matrix * fx.directions[i]).norm();
        if (fx.expected_admitted[i]) o.require(norm <= 0.2, "admitted direction survives");
        else o.require(norm >= 0.9, "rejected direction damaged");
        char buf[120];
        std::snprintf(buf, sizeof buf, " %s score %.2f %s |Pv| %.3f;", result.log[i].label.c_str(), result.log[i].score,
                      result.log[i].admitted ? "admitted" : "rejected", norm);
        o.detail += buf;
    }
    o.require(testing::slurp(SAFER_FIXTURE_DIR "/expansion_admission.golden.jsonl") == format_admission_log(result),
              "admission log differs from golden file");
    o.detail += " golden log matched";
    return o;
}

Outcome patch_equivalence() {
    Outcome o;
    safer::Rng rng(600);
    double worst64 = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto d = 2 + static_cast<Eigen::Index>(rng.uniform() * 30);
        const auto out = 1 + static_cast<Eigen::Index>(rng.uniform() * 64);
        TensorStore ckpt;
        ckpt.insert(NamedTensor::from_matrix("blk.attn2.to_k.weight", testing::gaussian(rng, out, d), DType::F64));
        ConceptBasis b;
        b.basis = testing::random_orthonormal(rng, d, 1);
        const auto p = removal_projector(b);
        LayerSelector sel;
        sel.expected_dim = d;
        sel.orientation = Orientation::InputCols;
        const Eigen::MatrixXd w = ckpt.at("blk.attn2.to_k.weight").to_matrix();
        const Eigen::MatrixXd patched = patch_checkpoint(ckpt, p, sel).checkpoint.at("blk.attn2.to_k.weight").to_matrix();
        const Eigen::VectorXd e = testing::gaussian(rng, d, 1);
        worst64 = std::max(worst64, (patched * e - w * (p.matrix * e)).cwiseAbs().maxCoeff());
    }
    o.require(worst64 <= 1e-9, "float64 two-path error");

    // float16 SD-style checkpoint, written and compared on disk.
    testing::TempDir dir("acceptance_patch");
    const auto ckpt = testing::sd_like_checkpoint(rng, DType::F16);
    save_store(ckpt, dir.file("in.st"));
    ConceptBasis style;
    style.basis = testing::random_orthonormal(rng, 768, 1);
    const auto p = removal_projector(style);
    const auto result = patch_checkpoint(load_store(dir.file("in.st")), p, LayerSelector{});
    save_store(result.checkpoint, dir.file("out.st"));
    const auto verify16 = verify_patch(ckpt, load_store(dir.file("out.st")), p, LayerSelector{}, 20);
    o.require(verify16.ok() && verify16.worst_error <= 3e-2, "float16 path");
    o.require(result.report.count() == 32, "expected 32 matched tensors");

    const auto before = oracle::index_payloads(dir.file("in.st"));
    const auto after = oracle::index_payloads(dir.file("out.st"));
    std::size_t identical = 0, unmatched = 0;
    for (const auto& [name, range] : before.ranges) {
        const bool matched = name.find("attn2.to_k.weight") != std::string::npos ||
                             name.find("attn2.to_v.weight") != std::string::npos;
        if (matched) continue;
        ++unmatched;
        if (oracle::same_payload(before, after, name)) ++identical;
    }
    o.require(identical == unmatched, "unmatched tensor bytes changed");

    // Sequential patches against one composed patch.
    ConceptBasis second;
    second.basis = testing::random_orthonormal(rng, 768, 2);
    const auto q = amplify_projector(second, 0.5);
    const auto twice = patch_checkpoint(result.checkpoint, q, LayerSelector{}).checkpoint;
    const auto pq = compose(std::vector<Projector>{p, q});
    const auto once = patch_checkpoint(ckpt, pq, LayerSelector{}).checkpoint;
    const auto v_twice = verify_patch(ckpt, twice, pq, LayerSelector{}, 20);
    const auto v_once = verify_patch(ckpt, once, pq, LayerSelector{}, 20);
    o.require(v_once.ok(), "composed patch fails verification");
    o.require(v_twice.worst_error <= 2 * verify_tolerance(DType::F16), "double patch outside 2x tolerance");

    char buf[200];
    std::snprintf(buf, sizeof buf, " f64 max err %.1e, f16 rel err %.1e, %zu/%zu unmatched identical, double %.1e",
                  worst64, verify16.worst_error, identical, unmatched, v_twice.worst_error);
    o.detail += buf;
    return o;
}

Outcome container_round_trip() {
    Outcome o;
    testing::TempDir dir("acceptance_store");
    safer::Rng rng(50);
    for (int i = 0; i < 50; ++i) {
        const auto store = testing::random_store(rng);
        const auto path = dir.file("s" + std::to_string(i) + ".st");
        save_store(store, path);
        const auto back = load_store(path);
        o.require(back == store, "store " + std::to_string(i) + " changed");
        save_store(back, path + ".again");
        o.require(testing::slurp(path) == testing::slurp(path + ".again"), "re-save not byte-exact");
    }
    const auto ref = load_store(SAFER_FIXTURE_DIR "/reference_writer.safetensors");
    const auto emb = ref.at("emb").to_matrix();
    bool values = emb.rows() == 4 && emb.cols() == 8;
    for (int i = 0; values && i < 32; ++i) values = emb(i / 8, i % 8) == 0.25 * i - 4.0;
    values = values && ref.at("vec64").to_doubles() == std::vector<double>{1.0, -2.5, 1e-3, 3.141592653589793};
    values = values && ref.at("half").to_doubles() == std::vector<double>{0.5, -1.0, 2.0, 65504.0};
    values = values && ref.at("ids").to_doubles() == std::vector<double>{1, 2, 3};
    values = values && ref.at("empty").shape == std::vector<std::int64_t>{0, 768};
    o.require(values, "reference writer values differ");
    o.detail += " 50 random stores byte-exact, reference file " + std::to_string(ref.size()) + " tensors match";
    return o;
}

Outcome cli_determinism() {
    Outcome o;
    testing::TempDir a("acceptance_cli_a");
    testing::TempDir b("acceptance_cli_b");
    const auto first = testing::run_pipeline(a);
    const auto second = testing::run_pipeline(b);
    std::size_t commands = 0;
    for (const auto& [key, value] : first) {
        o.require(second.count(key) && second.at(key) == value, key + " differs between runs");
        if (key.ends_with(".code")) {
            ++commands;
            o.require(value == "0", key + " exited " + value);
        }
    }
    o.detail += " " + std::to_string(commands) + " commands, " + std::to_string(first.size()) + " artifacts compared";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 planted-direction recovery", planted_recovery},
        {"2 spectrum dominance", spectrum_dominance},
        {"3 projector algebra", projector_algebra},
        {"4 end-to-end erasure", end_to_end_erasure},
        {"5 expansion gate", expansion_gate},
        {"6 patch behavioural equivalence", patch_equivalence},
        {"7 container round-trip", container_round_trip},
        {"8 CLI determinism", cli_determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string(" exception: ") + e.what();
        }
        if (!o.pass) ++failures;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ":" << o.detail << "\n";
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
    return failures == 0 ? 0 : 1;
}
