#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cardiomix/errors.hpp"
#include "cardiomix/manifest.hpp"
#include "cardiomix/model.hpp"
#include "cardiomix/rng.hpp"

using namespace cardiomix;
namespace fs = std::filesystem;

namespace {

Image random_image(int h, int w, SplitMix64& rng) {
    std::vector<double> data(static_cast<std::size_t>(h) * w);
    for (double& v : data) v = rng.uniform01();
    return Image(h, w, 1, std::move(data));
}

SoftLabel random_soft_label(int k, SplitMix64& rng) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
        v = 0.05 + rng.uniform01();
        sum += v;
    }
    for (double& v : p) v /= sum;
    return SoftLabel(std::move(p));
}

double batch_loss(const ModelParams& params, const std::vector<Sample>& batch) {
    double total = 0.0;
    for (const Sample& s : batch)
        total += loss_soft_ce(forward(params, *s.image).probs, *s.label);
    return total / static_cast<double>(batch.size());
}

// Central finite differences over every parameter; returns the worst
// relative error against the analytic gradient.
double max_gradient_rel_error(const ModelSpec& spec, std::uint64_t seed) {
    SplitMix64 rng(seed);
    ModelParams params(spec, rng.next());
    std::vector<Image> images;
    std::vector<SoftLabel> labels;
    for (int i = 0; i < 2; ++i) {
        images.push_back(random_image(spec.input_h, spec.input_w, rng));
        labels.push_back(random_soft_label(spec.num_classes, rng));
    }
    std::vector<Sample> batch;
    for (int i = 0; i < 2; ++i) batch.push_back({&images[i], &labels[i]});

    const GradResult analytic = backward(params, batch);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
        Tensor& tensor = params.tensors()[ti].value;
        for (std::size_t i = 0; i < tensor.data.size(); ++i) {
            const double keep = tensor.data[i];
            tensor.data[i] = keep + h;
            const double up = batch_loss(params, batch);
            tensor.data[i] = keep - h;
            const double down = batch_loss(params, batch);
            tensor.data[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic.grads[ti].value.data[i];
            const double rel =
                std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("zero-weight logistic yields uniform probabilities") {
    const ModelSpec spec{Arch::Logistic, 4, 4, 1, 2};
    const ModelParams zeros = ModelParams::zeros_like(ModelParams(spec, 1));
    SplitMix64 rng(2);
    const ForwardResult fr = forward(zeros, random_image(4, 4, rng));
    CHECK(fr.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fr.probs[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("probabilities are a proper distribution for every architecture") {
    SplitMix64 rng(3);
    for (const Arch arch : {Arch::Logistic, Arch::SmallCnn, Arch::TinyVit}) {
        const ModelSpec spec{arch, 20, 20, 1, 3};
        const ModelParams params(spec, 11);
        for (int i = 0; i < 5; ++i) {
            const ForwardResult fr = forward(params, random_image(20, 20, rng));
            double sum = 0.0;
            for (int k = 0; k < 3; ++k) {
                CHECK(fr.probs[k] > 0.0);
                CHECK(fr.probs[k] < 1.0);
                sum += fr.probs[k];
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("logistic forward equals the hand dot product") {
    const ModelSpec spec{Arch::Logistic, 2, 2, 1, 2};
    ModelParams params = ModelParams::zeros_like(ModelParams(spec, 1));
    Tensor& w = params.at("w");
    w.data = {0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4};  // class 0 zeros, class 1 given
    const Image ones = Image::constant(2, 2, 1, 1.0);
    const std::vector<double> logits = forward_logits(params, ones);
    CHECK(logits[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(logits[1] == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> expect = softmax({0.0, 1.0});
    const ForwardResult fr = forward(params, ones);
    CHECK(fr.probs[0] == doctest::Approx(expect[0]).epsilon(1e-15));
    CHECK(fr.probs[1] == doctest::Approx(expect[1]).epsilon(1e-15));
}

TEST_CASE("forward rejects mismatched input dimensions") {
    const ModelSpec spec{Arch::Logistic, 4, 4, 1, 2};
    const ModelParams params(spec, 1);
    CHECK_THROWS_AS(forward(params, Image::zeros(5, 4)), UsageError);
}

TEST_CASE("tinyvit requires patch-divisible input") {
    const ModelSpec bad{Arch::TinyVit, 25, 30, 1, 2};
    CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("soft cross-entropy basics") {
    CHECK(loss_soft_ce(SoftLabel({1.0, 0.0}), SoftLabel::one_hot(0, 2)) ==
          doctest::Approx(0.0).epsilon(1e-15));
    const SoftLabel uniform4(std::vector<double>(4, 0.25));
    SplitMix64 rng(8);
    CHECK(loss_soft_ce(uniform4, random_soft_label(4, rng)) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // Linear in the label: L(lam*y1 + (1-lam)*y2) = lam*L(y1) + (1-lam)*L(y2).
    const SoftLabel probs = random_soft_label(3, rng);
    const SoftLabel y1 = SoftLabel::one_hot(0, 3), y2 = SoftLabel::one_hot(2, 3);
    const double lam = 0.37;
    const SoftLabel mixed = mix_labels(y1, y2, lam);
    CHECK(loss_soft_ce(probs, mixed) ==
          doctest::Approx(lam * loss_soft_ce(probs, y1) +
                          (1 - lam) * loss_soft_ce(probs, y2))
              .epsilon(1e-12));
}

TEST_CASE("gradient with respect to logits is probs minus label") {
    // For the logistic bias, d logit_k / d b_k = 1, so the bias gradient is
    // exactly (probs - label) and checks the identity through backward().
    const ModelSpec spec{Arch::Logistic, 3, 3, 1, 2};
    SplitMix64 rng(21);
    const ModelParams params(spec, 5);
    const Image img = random_image(3, 3, rng);
    const SoftLabel label = random_soft_label(2, rng);
    const GradResult g = backward(params, {{&img, &label}});
    const ForwardResult fr = forward(params, img);
    for (int k = 0; k < 2; ++k) {
        const double expect = fr.probs[k] - label[k];
        CHECK(g.grads[1].value.data[k] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match finite differences") {
    CHECK(max_gradient_rel_error({Arch::Logistic, 20, 20, 1, 2}, 101) < 1e-4);
    CHECK(max_gradient_rel_error({Arch::SmallCnn, 12, 12, 1, 2}, 202) < 1e-4);
    CHECK(max_gradient_rel_error({Arch::TinyVit, 20, 20, 1, 2}, 303) < 1e-4);
}

TEST_CASE("softmax is invariant to logit shifts") {
    const std::vector<double> a = softmax({0.3, -1.2, 2.5});
    const std::vector<double> b = softmax({0.3 + 7.0, -1.2 + 7.0, 2.5 + 7.0});
    for (int k = 0; k < 3; ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-12);
}

TEST_CASE("attention rows are probability distributions") {
    const ModelSpec spec{Arch::TinyVit, 20, 20, 1, 2};
    const ModelParams params(spec, 9);
    SplitMix64 rng(10);
    const std::vector<std::vector<double>> rows =
        attention_rows(params, random_image(20, 20, rng));
    REQUIRE(rows.size() == vit::kHeads);
    const int tokens = 5;
    for (const std::vector<double>& head : rows) {
        REQUIRE(head.size() == static_cast<std::size_t>(tokens * tokens));
        for (int t = 0; t < tokens; ++t) {
            double sum = 0.0;
            for (int u = 0; u < tokens; ++u) sum += head[t * tokens + u];
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }

    const ModelSpec cnn_spec{Arch::SmallCnn, 20, 20, 1, 2};
    const ModelParams cnn_params(cnn_spec, 9);
    CHECK_THROWS_AS(attention_rows(cnn_params, random_image(20, 20, rng)),
                    UnsupportedArchError);
}

TEST_CASE("moving a patch changes the transformer output") {
    const ModelSpec spec{Arch::TinyVit, 20, 20, 1, 2};
    const ModelParams params(spec, 42);
    std::vector<double> a(400, 0.1), b(400, 0.1);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            a[y * 20 + x] = 0.9;            // bright patch top-left
            b[(y + 10) * 20 + (x + 10)] = 0.9;  // bright patch bottom-right
        }
    const std::vector<double> la = forward_logits(params, Image(20, 20, 1, a));
    const std::vector<double> lb = forward_logits(params, Image(20, 20, 1, b));
    CHECK(std::abs(la[0] - lb[0]) + std::abs(la[1] - lb[1]) > 1e-9);
}

TEST_CASE("training is deterministic and obeys the update rule") {
    SplitMix64 rng(12);
    std::vector<Example> examples;
    for (int i = 0; i < 10; ++i)
        examples.push_back({"e" + std::to_string(i), random_image(6, 6, rng),
                            SoftLabel::one_hot(i % 2, 2), std::nullopt});
    const Dataset ds(std::move(examples), default_class_names(2));
    const ModelSpec spec{Arch::Logistic, 6, 6, 1, 2};

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.seed = 77;

    const TrainResult r1 = train(ds, spec, cfg);
    const TrainResult r2 = train(ds, spec, cfg);
    CHECK(r1.loss_history == r2.loss_history);
    for (std::size_t ti = 0; ti < r1.params.tensors().size(); ++ti)
        CHECK(r1.params.tensors()[ti].value.data == r2.params.tensors()[ti].value.data);

    // lr = 0 leaves the initialization untouched.
    TrainConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    const TrainResult init = train(ds, spec, [&] {
        TrainConfig c = cfg;
        c.epochs = 0;
        return c;
    }());
    const TrainResult unchanged = train(ds, spec, frozen);
    for (std::size_t ti = 0; ti < init.params.tensors().size(); ++ti)
        CHECK(unchanged.params.tensors()[ti].value.data ==
              init.params.tensors()[ti].value.data);

    // One full-batch step without momentum is w - lr*g.
    TrainConfig one_step = cfg;
    one_step.epochs = 1;
    one_step.batch_size = 16;  // covers the whole set
    one_step.momentum = 0.0;
    const TrainResult stepped = train(ds, spec, one_step);
    std::vector<Sample> batch;
    for (const Example& ex : ds.examples()) batch.push_back({&ex.image, &ex.label});
    const GradResult g = backward(init.params, batch);
    for (std::size_t ti = 0; ti < init.params.tensors().size(); ++ti)
        for (std::size_t i = 0; i < init.params.tensors()[ti].value.data.size(); ++i) {
            const double expect = init.params.tensors()[ti].value.data[i] -
                                  one_step.learning_rate * g.grads[ti].value.data[i];
            CHECK(stepped.params.tensors()[ti].value.data[i] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }

    CHECK_THROWS_AS(train_subset(ds, {}, spec, cfg), UsageError);
}

TEST_CASE("logistic training drives a separable set below 0.1 loss") {
    std::vector<Example> examples;
    for (int i = 0; i < 10; ++i) {
        const int cls = i % 2;
        examples.push_back({"e" + std::to_string(i),
                            Image::constant(4, 4, 1, cls == 0 ? 0.2 : 0.8),
                            SoftLabel::one_hot(cls, 2), std::nullopt});
    }
    const Dataset ds(std::move(examples), default_class_names(2));
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.5;
    cfg.momentum = 0.9;
    cfg.seed = 4;
    const TrainResult r = train(ds, {Arch::Logistic, 4, 4, 1, 2}, cfg);
    REQUIRE(r.loss_history.size() == 50);
    CHECK(r.loss_history.back() < 0.1);
}

TEST_CASE("logistic gradient vanishes at convergence on a separable set") {
    std::vector<Example> examples;
    for (int i = 0; i < 6; ++i) {
        const int cls = i % 2;
        examples.push_back({"e" + std::to_string(i),
                            Image::constant(4, 4, 1, cls == 0 ? 0.1 : 0.9),
                            SoftLabel::one_hot(cls, 2), std::nullopt});
    }
    const Dataset ds(std::move(examples), default_class_names(2));
    TrainConfig cfg;
    cfg.epochs = 4000;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.3;
    cfg.momentum = 0.99;
    cfg.seed = 6;
    const TrainResult r = train(ds, {Arch::Logistic, 4, 4, 1, 2}, cfg);

    std::vector<Sample> batch;
    for (const Example& ex : ds.examples()) batch.push_back({&ex.image, &ex.label});
    const GradResult g = backward(r.params, batch);
    double norm_sq = 0.0;
    for (const NamedTensor& nt : g.grads)
        for (double v : nt.value.data) norm_sq += v * v;
    CHECK(std::sqrt(norm_sq) < 1e-6);
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit-exactly") {
    const fs::path dir = fs::temp_directory_path() / "cardiomix_test_ckpt";
    fs::create_directories(dir);
    for (const Arch arch : {Arch::Logistic, Arch::SmallCnn, Arch::TinyVit}) {
        const ModelSpec spec{arch, 20, 20, 1, 2};
        const ModelParams params(spec, 31);
        const fs::path file = dir / (std::string(arch_name(arch)) + ".cmix");
        save_checkpoint(params, file.string());
        const ModelParams loaded = load_checkpoint(file.string());
        const ModelParams rounded = quantize_to_f32(params);
        SplitMix64 rng(14);
        for (int i = 0; i < 3; ++i) {
            const Image img = random_image(20, 20, rng);
            CHECK(forward_logits(loaded, img) == forward_logits(rounded, img));
        }
    }
}

TEST_CASE("checkpoint rejects corruption") {
    const fs::path dir = fs::temp_directory_path() / "cardiomix_test_ckpt_bad";
    fs::create_directories(dir);
    const ModelSpec spec{Arch::Logistic, 4, 4, 1, 2};
    const ModelParams params(spec, 3);
    const fs::path good = dir / "good.cmix";
    save_checkpoint(params, good.string());

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto spit = [](const fs::path& p, const std::string& bytes) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << bytes;
    };
    const std::string bytes = slurp(good);

    spit(dir / "truncated.cmix", bytes.substr(0, bytes.size() - 7));
    CHECK_THROWS_AS(load_checkpoint((dir / "truncated.cmix").string()), IntegrityError);

    std::string magic = bytes;
    magic[0] = 'X';
    spit(dir / "magic.cmix", magic);
    CHECK_THROWS_AS(load_checkpoint((dir / "magic.cmix").string()), FormatError);

    std::string arch = bytes;
    const std::size_t at = arch.find("logistic");
    arch.replace(at, std::string("logistic").size(), "resnet50");
    spit(dir / "arch.cmix", arch);
    CHECK_THROWS_AS(load_checkpoint((dir / "arch.cmix").string()), UnsupportedArchError);
}
