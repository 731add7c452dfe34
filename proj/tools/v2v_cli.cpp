#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "v2v/codec.hpp"
#include "v2v/flow.hpp"
#include "v2v/image_io.hpp"
#include "v2v/pipeline.hpp"
#include "v2v/synthetic.hpp"

namespace fs = std::filesystem;
using namespace v2v;

namespace {

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string prompt = "a watercolor painting";
    std::optional<std::uint64_t> seed;
    std::optional<int> key_interval;
    std::optional<double> strength;
    std::optional<std::string> adain;
    std::optional<std::string> color_correct;
};

void add_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config_file, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--set", args.overrides, "override a config key (key=value), repeatable");
    app->add_option("--prompt", args.prompt, "text prompt");
    app->add_option("--seed", args.seed, "random seed");
    app->add_option("--key-interval", args.key_interval, "key frame interval K")->check(CLI::PositiveNumber);
    app->add_option("--strength", args.strength, "SDEdit strength as a fraction of t_max")->check(CLI::Range(0.0, 1.0));
    app->add_option("--adain", args.adain, "AdaIN color constraint")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--color-correct", args.color_correct, "histogram color correction")
        ->check(CLI::IsMember({"on", "off"}));
}

PipelineConfig make_config(const CommonArgs& args) {
    PipelineConfig cfg;
    if (!args.config_file.empty()) apply_config_file(cfg, args.config_file);
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed) cfg.seed = *args.seed;
    if (args.key_interval) cfg.key_interval = *args.key_interval;
    if (args.strength) cfg.strength = *args.strength;
    if (args.adain) cfg.adain_enabled = *args.adain == "on";
    if (args.color_correct) cfg.color_correct = *args.color_correct == "on";
    cfg.validate();
    return cfg;
}

std::string flow_name(const char* dir, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "flow_%s_%04d.flo", dir, i);
    return buf;
}

// Consecutive flow pairs, read from flow_dir when given, estimated otherwise.
FlowChain load_or_estimate_flows(const std::vector<Frame>& inputs, const std::string& flow_dir,
                                 const PipelineConfig& cfg) {
    if (flow_dir.empty()) return build_flow_chain(inputs, cfg);
    std::vector<FlowPair> steps;
    for (std::size_t i = 0; i + 1 < inputs.size(); ++i) {
        FlowPair p;
        p.forward = read_flo(fs::path(flow_dir) / flow_name("fwd", static_cast<int>(i)));
        p.backward = read_flo(fs::path(flow_dir) / flow_name("bwd", static_cast<int>(i)));
        if (p.forward.width() != inputs[i].width() || p.forward.height() != inputs[i].height()) {
            throw ShapeError("flow " + std::to_string(i) + " does not match the frame size");
        }
        p.threshold = cfg.occlusion;
        p.mask = occlusion_mask(p.forward, p.backward, cfg.occlusion);
        steps.push_back(std::move(p));
    }
    return FlowChain(std::move(steps));
}

void write_metrics_csv(const fs::path& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(10);
    out << "pair,pixel_mse\n";
    for (std::size_t i = 0; i < report.per_frame.size(); ++i) out << i << "," << report.per_frame[i] << "\n";
    out << "mean," << report.pixel_mse << "\n";
}

Tensor normalized_error_map(const Tensor& err) {
    double hi = 0.0;
    for (double v : err.values()) hi = std::max(hi, v);
    Tensor out = err;
    if (hi > 0.0) for (double& v : out.values()) v /= hi;
    return out;
}

std::map<int, Frame> load_keys(const fs::path& dir) {
    static const std::regex pattern(R"(.*_(\d+)\.png)");
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, m, pattern)) files.emplace_back(std::stoi(m[1]), entry.path());
    }
    if (files.empty()) throw IoError("no numbered key frames in " + dir.string());
    std::map<int, Frame> keys;
    for (const auto& [index, path] : files) {
        Tensor t = read_png(path);
        if (t.channels() != 3) throw ShapeError(path.string() + " is not an RGB image");
        keys[index] = std::move(t);
    }
    return keys;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot video-to-video translation with a toy diffusion backend"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string input_dir, output_dir, keys_dir, flow_dir, metrics_file, error_dir, frames_dir;
    int iterations = 10;
    int size = 64;

    auto* translate = app.add_subcommand("translate", "full pipeline: key frames, propagation, blending");
    add_common(translate, common);
    translate->add_option("input", input_dir, "directory of input frames")->required()->check(CLI::ExistingDirectory);
    translate->add_option("output", output_dir, "output directory")->required();
    translate->add_option("--metrics", metrics_file, "write the Pixel-MSE report as CSV");
    translate->add_option("--error-maps", error_dir, "write propagation error maps as grayscale PNGs");

    auto* keyframes = app.add_subcommand("keyframes", "translate key frames only");
    add_common(keyframes, common);
    keyframes->add_option("input", input_dir, "directory of input frames")->required()->check(CLI::ExistingDirectory);
    keyframes->add_option("output", output_dir, "output directory")->required();

    auto* propagate = app.add_subcommand("propagate", "propagate stylized key frames to the whole clip");
    add_common(propagate, common);
    propagate->add_option("keys", keys_dir, "directory of stylized keys named *_NNNN.png")->required()->check(CLI::ExistingDirectory);
    propagate->add_option("input", input_dir, "directory of input frames")->required()->check(CLI::ExistingDirectory);
    propagate->add_option("output", output_dir, "output directory")->required();
    propagate->add_option("--flow-dir", flow_dir, "precomputed .flo files")->check(CLI::ExistingDirectory);
    propagate->add_option("--error-maps", error_dir, "write propagation error maps as grayscale PNGs");

    auto* flow = app.add_subcommand("flow", "estimate and export flows between consecutive frames");
    add_common(flow, common);
    flow->add_option("input", input_dir, "directory of input frames")->required()->check(CLI::ExistingDirectory);
    flow->add_option("output", output_dir, "output directory")->required();

    auto* bench = app.add_subcommand("codec-bench", "round-trip error curves of plain and fidelity encoding");
    add_common(bench, common);
    bench->add_option("--input", input_dir, "directory of images (default: synthetic corpus)")->check(CLI::ExistingDirectory);
    bench->add_option("--iterations", iterations, "round trips")->check(CLI::PositiveNumber);
    bench->add_option("--size", size, "synthetic image size")->check(CLI::Range(16, 1024));
    bench->add_option("--out", metrics_file, "CSV output (default: stdout)");

    auto* metrics = app.add_subcommand("metrics", "Pixel-MSE of an output clip as CSV");
    add_common(metrics, common);
    metrics->add_option("frames", frames_dir, "directory of output frames")->required()->check(CLI::ExistingDirectory);
    metrics->add_option("input", input_dir, "directory of input frames the flows come from")->check(CLI::ExistingDirectory);
    metrics->add_option("--flow-dir", flow_dir, "precomputed .flo files")->check(CLI::ExistingDirectory);
    metrics->add_option("--out", metrics_file, "CSV output (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        const PipelineConfig cfg = make_config(common);
        const ToyLossyCodec codec;

        if (translate->parsed() || keyframes->parsed()) {
            VideoJob job{load_frames(input_dir), common.prompt, cfg};
            const Pipeline pipeline(codec);
            if (keyframes->parsed()) {
                const std::vector<Frame> inputs = pipeline.prepare_inputs(job);
                const FlowChain chain = build_flow_chain(job.frames, cfg);
                const KeyframeOutputs keys = pipeline.translate_keys(job, inputs, chain);
                fs::create_directories(output_dir);
                for (const auto& [index, frame] : keys.frames) write_png(fs::path(output_dir) / frame_filename(index), frame);
                std::cout << "wrote " << keys.frames.size() << " key frames to " << output_dir << "\n";
                return 0;
            }
            const PipelineResult result = pipeline.run(job);
            save_frames(output_dir, result.frames);
            if (!error_dir.empty()) {
                std::vector<Tensor> maps;
                for (const Tensor& e : result.error_maps) maps.push_back(normalized_error_map(e));
                save_frames(error_dir, maps, "error");
            }
            if (!metrics_file.empty() && result.frames.size() > 1) write_metrics_csv(metrics_file, result.metrics);
            std::cout << "wrote " << result.frames.size() << " frames to " << output_dir;
            if (result.frames.size() > 1) std::cout << ", pixel_mse=" << result.metrics.pixel_mse;
            std::cout << "\n";
        } else if (propagate->parsed()) {
            const std::vector<Frame> inputs = load_frames(input_dir);
            const std::map<int, Frame> keys = load_keys(keys_dir);
            for (const auto& [index, frame] : keys) {
                if (index >= static_cast<int>(inputs.size())) throw std::out_of_range("key index " + std::to_string(index) + " beyond the clip");
                if (!frame.same_shape(inputs[index])) throw ShapeError("key " + std::to_string(index) + " does not match the input size");
            }
            std::vector<Frame> frames;
            std::vector<Tensor> errors;
            if (inputs.size() == 1) {
                frames = {keys.begin()->second};
                errors = {Tensor(1, inputs[0].height(), inputs[0].width())};
            } else {
                const FlowChain chain = load_or_estimate_flows(inputs, flow_dir, cfg);
                PropagationOptions prop = cfg.propagation;
                prop.patch.seed = cfg.seed;
                PropagatedVideo video = propagate_video(keys, inputs, chain, prop);
                frames = std::move(video.frames);
                errors = std::move(video.error_maps);
            }
            save_frames(output_dir, frames);
            if (!error_dir.empty()) {
                for (Tensor& e : errors) e = normalized_error_map(e);
                save_frames(error_dir, errors, "error");
            }
            std::cout << "wrote " << frames.size() << " frames to " << output_dir << "\n";
        } else if (flow->parsed()) {
            const std::vector<Frame> inputs = load_frames(input_dir);
            if (inputs.size() < 2) throw std::invalid_argument("flow needs at least two frames");
            const FlowChain chain = build_flow_chain(inputs, cfg);
            fs::create_directories(output_dir);
            for (int i = 0; i < chain.step_count(); ++i) {
                write_flo(fs::path(output_dir) / flow_name("fwd", i), chain.step(i).forward);
                write_flo(fs::path(output_dir) / flow_name("bwd", i), chain.step(i).backward);
            }
            std::cout << "wrote " << chain.step_count() << " flow pairs to " << output_dir << "\n";
        } else if (bench->parsed()) {
            const std::vector<Frame> images = input_dir.empty() ? synthetic::image_corpus(size, size) : load_frames(input_dir);
            std::vector<double> plain(iterations, 0.0), fidelity(iterations, 0.0);
            for (const Frame& img : images) {
                const auto a = roundtrip_error_curve(codec, img, iterations, false, cfg.fidelity);
                const auto b = roundtrip_error_curve(codec, img, iterations, true, cfg.fidelity);
                for (int k = 0; k < iterations; ++k) {
                    plain[k] += a[k] / images.size();
                    fidelity[k] += b[k] / images.size();
                }
            }
            std::ofstream file;
            if (!metrics_file.empty()) {
                file.open(metrics_file);
                if (!file) throw IoError("cannot write " + metrics_file);
            }
            std::ostream& out = metrics_file.empty() ? std::cout : file;
            out.precision(10);
            out << "iteration,mse_plain,mse_fidelity\n";
            for (int k = 0; k < iterations; ++k) out << k + 1 << "," << plain[k] << "," << fidelity[k] << "\n";
        } else if (metrics->parsed()) {
            const std::vector<Frame> frames = load_frames(frames_dir);
            if (input_dir.empty() && flow_dir.empty()) throw std::invalid_argument("metrics needs the input frames or --flow-dir");
            std::vector<Frame> inputs = input_dir.empty() ? frames : load_frames(input_dir);
            if (inputs.size() != frames.size()) throw std::invalid_argument("input and output clips differ in length");
            const FlowChain chain = load_or_estimate_flows(inputs, flow_dir, cfg);
            const MetricsReport report = pixel_mse(frames, chain);
            if (metrics_file.empty()) {
                std::cout << "pair,pixel_mse\n";
                for (std::size_t i = 0; i < report.per_frame.size(); ++i) std::cout << i << "," << report.per_frame[i] << "\n";
                std::cout << "mean," << report.pixel_mse << "\n";
            } else {
                write_metrics_csv(metrics_file, report);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
