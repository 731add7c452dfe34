#include "v2v/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "v2v/denoiser.hpp"
#include "v2v/histogram.hpp"

namespace v2v {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out)) {
        throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used, 0);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) {
        throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    const long long x = parse_integer(key, v);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw std::invalid_argument("config: '" + key + "' out of range");
    }
    return static_cast<int>(x);
}

bool parse_bool(const std::string& key, std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw std::invalid_argument("config: '" + key + "' expects on/off, got '" + v + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T PipelineConfig::*field) {
    return [field](PipelineConfig& c, const std::string& k, const std::string& v) {
        if constexpr (std::is_same_v<T, double>) c.*field = parse_double(k, v);
        else c.*field = parse_int(k, v);
    };
}

Setter flag(bool PipelineConfig::*field) {
    return [field](PipelineConfig& c, const std::string& k, const std::string& v) { c.*field = parse_bool(k, v); };
}

const std::unordered_map<std::string, Setter>& setters() {
    static const std::unordered_map<std::string, Setter> table = {
        {"t_max", number(&PipelineConfig::t_max)},
        {"ddim_steps", number(&PipelineConfig::ddim_steps)},
        {"strength", number(&PipelineConfig::strength)},
        {"t_s", number(&PipelineConfig::t_s)},
        {"t_p0", number(&PipelineConfig::t_p0)},
        {"t_p1", number(&PipelineConfig::t_p1)},
        {"t_a", number(&PipelineConfig::t_a)},
        {"adain_enabled", flag(&PipelineConfig::adain_enabled)},
        {"cross_frame_attention", flag(&PipelineConfig::cross_frame_attention)},
        {"shape_fusion", flag(&PipelineConfig::shape_fusion)},
        {"pixel_fusion", flag(&PipelineConfig::pixel_fusion)},
        {"color_correct", flag(&PipelineConfig::color_correct)},
        {"control_weight", number(&PipelineConfig::control_weight)},
        {"key_interval", number(&PipelineConfig::key_interval)},
        {"seed", [](PipelineConfig& c, const std::string& k, const std::string& v) {
             const long long x = parse_integer(k, v);
             if (x < 0) throw std::invalid_argument("config: 'seed' must be nonnegative");
             c.seed = static_cast<std::uint64_t>(x);
         }},
        {"lambda_e", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fidelity.lambda_e = parse_double(k, v); }},
        {"artifact_threshold", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.fidelity.artifact_threshold = parse_double(k, v); }},
        {"flow_levels", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.flow.levels = parse_int(k, v); }},
        {"flow_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.flow.iterations = parse_int(k, v); }},
        {"flow_warps", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.flow.warps = parse_int(k, v); }},
        {"flow_smoothness", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.flow.smoothness = parse_double(k, v); }},
        {"flow_presmooth", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.flow.presmooth_sigma = parse_double(k, v); }},
        {"occlusion_absolute", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.occlusion.absolute = parse_double(k, v); }},
        {"occlusion_relative", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.occlusion.relative = parse_double(k, v); }},
        {"patch_size", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.patch.patch_size = parse_int(k, v); }},
        {"patch_iterations", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.patch.iterations = parse_int(k, v); }},
        {"weight_color", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.weights.color = parse_double(k, v); }},
        {"weight_positional", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.weights.positional = parse_double(k, v); }},
        {"weight_edge", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.weights.edge = parse_double(k, v); }},
        {"weight_temporal", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.propagation.weights.temporal = parse_double(k, v); }},
    };
    return table;
}

}  // namespace

NoiseSchedule PipelineConfig::schedule() const { return NoiseSchedule::scaled_linear(t_max); }

SamplerOptions PipelineConfig::sampler_options() const {
    validate();
    SamplerOptions o;
    o.strength_t = static_cast<int>(std::lround(strength * t_max));
    o.ddim_steps = ddim_steps;
    o.stages = StageSchedule::from_fractions(t_max, t_s, t_p0, t_p1, t_a);
    o.cross_frame_attention = cross_frame_attention;
    o.shape_fusion = shape_fusion;
    o.pixel_fusion = pixel_fusion;
    o.adain = adain_enabled;
    o.seed = seed;
    o.fidelity = fidelity;
    return o;
}

void PipelineConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (t_max < 2) fail("t_max must be >= 2");
    if (ddim_steps < 1) fail("ddim_steps must be >= 1");
    if (!(strength > 0.0 && strength <= 1.0)) fail("strength must lie in (0, 1]");
    for (double f : {t_s, t_p0, t_p1, t_a}) {
        if (!(f >= 0.0 && f <= 1.0)) fail("stage fractions must lie in [0, 1]");
    }
    if (key_interval < 1) fail("key_interval must be >= 1");
    if (control_weight < 0.0) fail("control_weight must be >= 0");
    if (fidelity.lambda_e < 0.0) fail("lambda_e must be >= 0");
    if (!(fidelity.artifact_threshold > 0.0)) fail("artifact_threshold must be > 0");
    if (flow.levels < 1 || flow.iterations < 1 || flow.warps < 1) fail("flow levels/iterations/warps must be >= 1");
    if (!(flow.smoothness > 0.0)) fail("flow_smoothness must be > 0");
    if (flow.presmooth_sigma < 0.0) fail("flow_presmooth must be >= 0");
    if (!(occlusion.absolute > 0.0) || occlusion.relative < 0.0) fail("occlusion thresholds invalid");
    const auto& p = propagation.patch;
    if (p.patch_size < 3 || p.patch_size % 2 == 0) fail("patch_size must be odd and >= 3");
    if (p.iterations < 0) fail("patch_iterations must be >= 0");
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
}

void apply_config(PipelineConfig& cfg, std::istream& in) {
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(number) + ": expected key=value");
        }
        set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    apply_config(cfg, in);
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

std::string format_config(const PipelineConfig& c) {
    std::ostringstream out;
    auto b = [](bool v) { return v ? "on" : "off"; };
    auto d = [](double v) { return shortest(v); };
    out << "t_max=" << c.t_max << "\nddim_steps=" << c.ddim_steps << "\nstrength=" << d(c.strength)
        << "\nt_s=" << d(c.t_s) << "\nt_p0=" << d(c.t_p0) << "\nt_p1=" << d(c.t_p1) << "\nt_a=" << d(c.t_a)
        << "\nadain_enabled=" << b(c.adain_enabled) << "\ncross_frame_attention=" << b(c.cross_frame_attention)
        << "\nshape_fusion=" << b(c.shape_fusion) << "\npixel_fusion=" << b(c.pixel_fusion)
        << "\ncolor_correct=" << b(c.color_correct) << "\ncontrol_weight=" << d(c.control_weight)
        << "\nseed=" << c.seed << "\nkey_interval=" << c.key_interval << "\nlambda_e=" << d(c.fidelity.lambda_e)
        << "\nartifact_threshold=" << d(c.fidelity.artifact_threshold) << "\nflow_levels=" << c.flow.levels
        << "\nflow_iterations=" << c.flow.iterations << "\nflow_warps=" << c.flow.warps
        << "\nflow_smoothness=" << d(c.flow.smoothness) << "\nflow_presmooth=" << d(c.flow.presmooth_sigma)
        << "\nocclusion_absolute=" << d(c.occlusion.absolute) << "\nocclusion_relative=" << d(c.occlusion.relative)
        << "\npatch_size=" << c.propagation.patch.patch_size
        << "\npatch_iterations=" << c.propagation.patch.iterations
        << "\nweight_color=" << d(c.propagation.weights.color)
        << "\nweight_positional=" << d(c.propagation.weights.positional)
        << "\nweight_edge=" << d(c.propagation.weights.edge)
        << "\nweight_temporal=" << d(c.propagation.weights.temporal) << "\n";
    return out.str();
}

std::vector<int> key_frame_indices(int frame_count, int key_interval) {
    if (key_interval < 1) throw std::invalid_argument("key interval must be >= 1");
    if (frame_count < 0) throw std::invalid_argument("frame count must be >= 0");
    std::vector<int> keys;
    for (int i = 0; i < frame_count; i += key_interval) keys.push_back(i);
    return keys;
}

Frame color_correct(const Frame& input, const Frame& reference) { return match_histogram(input, reference); }

MetricsReport pixel_mse(const std::vector<Frame>& outputs, const std::vector<FlowPair>& steps) {
    if (outputs.size() < 2) throw std::invalid_argument("pixel_mse: needs at least two frames");
    if (steps.size() + 1 != outputs.size()) {
        throw std::invalid_argument("pixel_mse: missing flow (" + std::to_string(steps.size()) + " pairs for " +
                                    std::to_string(outputs.size()) + " frames)");
    }
    MetricsReport report;
    for (std::size_t i = 0; i + 1 < outputs.size(); ++i) {
        const Frame& a = outputs[i];
        const Frame& b = outputs[i + 1];
        require_same_shape(a, b, "pixel_mse");
        const FlowPair& step = steps[i];
        if (step.forward.width() != b.width() || step.forward.height() != b.height() ||
            step.mask.width() != b.width() || step.mask.height() != b.height()) {
            throw ShapeError("pixel_mse: flow " + std::to_string(i) + " does not match frame size");
        }
        const Frame aligned = warp(a, step.forward);
        double sum = 0.0;
        std::size_t count = 0;
        for (int y = 0; y < b.height(); ++y) {
            for (int x = 0; x < b.width(); ++x) {
                if (step.mask.at(x, y) == 0) continue;
                for (int c = 0; c < b.channels(); ++c) {
                    const double d = aligned.at(c, y, x) - b.at(c, y, x);
                    sum += d * d;
                }
                ++count;
            }
        }
        report.per_frame.push_back(count == 0 ? 0.0 : sum / (static_cast<double>(count) * b.channels()));
    }
    double total = 0.0;
    for (double v : report.per_frame) total += v;
    report.pixel_mse = total / static_cast<double>(report.per_frame.size());
    return report;
}

MetricsReport pixel_mse(const std::vector<Frame>& outputs, const FlowChain& chain) {
    std::vector<FlowPair> steps;
    for (int i = 0; i < chain.step_count(); ++i) steps.push_back(chain.step(i));
    return pixel_mse(outputs, steps);
}

void check_frames(const std::vector<Frame>& frames) {
    if (frames.empty()) throw std::invalid_argument("video has no frames");
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (!frames[i].same_shape(frames[0])) {
            throw ShapeError("frame " + std::to_string(i) + " is " + frames[i].shape_string() + ", frame 0 is " +
                             frames[0].shape_string());
        }
    }
}

FlowChain build_flow_chain(const std::vector<Frame>& frames, const PipelineConfig& cfg) {
    if (frames.size() < 2) return {};
    return FlowChain(frames, cfg.flow, cfg.occlusion);
}

namespace {

Conditioning make_conditioning(const VideoJob& job, const Frame& input, const LossyCodec& codec) {
    Conditioning cond;
    cond.prompt = prompt_embedding(job.prompt);
    cond.structure = edge_map(input, codec.spatial_factor());
    cond.control_weight = job.config.control_weight;
    return cond;
}

}  // namespace

std::vector<Frame> Pipeline::prepare_inputs(const VideoJob& job) const {
    check_frames(job.frames);
    if (!job.config.color_correct) return job.frames;
    const NoiseSchedule schedule = job.config.schedule();
    const ToyDenoiser denoiser(schedule, codec_.latent_channels());
    SamplerOptions opts = job.config.sampler_options();
    opts.strength_t = schedule.t_max();
    const Frame& anchor = job.frames.front();
    Frame reference;
    try {
        reference = translate_keyframe(anchor, nullptr, make_conditioning(job, anchor, codec_), schedule, opts, codec_,
                                       denoiser, 0)
                        .output;
    } catch (const std::exception& e) {
        throw FrameError(0, std::string("color reference: ") + e.what());
    }
    std::vector<Frame> out;
    out.reserve(job.frames.size());
    for (const Frame& f : job.frames) out.push_back(color_correct(f, reference));
    return out;
}

KeyframeOutputs Pipeline::translate_keys(const VideoJob& job, const std::vector<Frame>& inputs,
                                         const FlowChain& chain) const {
    check_frames(inputs);
    const PipelineConfig& cfg = job.config;
    const NoiseSchedule schedule = cfg.schedule();
    const SamplerOptions opts = cfg.sampler_options();
    const ToyDenoiser denoiser(schedule, codec_.latent_channels());
    const std::vector<int> keys = key_frame_indices(static_cast<int>(inputs.size()), cfg.key_interval);

    KeyframeOutputs out;
    KeyframeRecord anchor_record, previous_record;
    Frame anchor_output, previous_output;
    int previous_key = 0;
    for (int key : keys) {
        try {
            const Conditioning cond = make_conditioning(job, inputs[key], codec_);
            KeyframeResult r;
            if (key == keys.front()) {
                r = translate_keyframe(inputs[key], nullptr, cond, schedule, opts, codec_, denoiser, key);
            } else {
                FrameContext ctx;
                ctx.anchor = &anchor_record;
                ctx.previous = &previous_record;
                ctx.anchor_output = anchor_output;
                ctx.previous_output = previous_output;
                ctx.anchor_guide = chain.mapping(keys.front(), key);
                ctx.previous_guide = chain.mapping(previous_key, key);
                r = translate_keyframe(inputs[key], &ctx, cond, schedule, opts, codec_, denoiser, key);
            }
            out.frames[key] = r.output;
            out.traces.push_back(r.trace);
            if (key == keys.front()) {
                anchor_record = r.record;
                anchor_output = r.output;
            }
            previous_record = std::move(r.record);
            previous_output = std::move(r.output);
            previous_key = key;
        } catch (const FrameError&) {
            throw;
        } catch (const std::exception& e) {
            throw FrameError(key, e.what());
        }
    }
    return out;
}

PipelineResult Pipeline::run(const VideoJob& job) const {
    job.config.validate();
    check_frames(job.frames);
    codec_.check_frame(job.frames.front());
    const int n = static_cast<int>(job.frames.size());

    const std::vector<Frame> inputs = prepare_inputs(job);
    const FlowChain chain = build_flow_chain(job.frames, job.config);
    KeyframeOutputs keyed = translate_keys(job, inputs, chain);

    PipelineResult result;
    result.keys = key_frame_indices(n, job.config.key_interval);
    result.traces = std::move(keyed.traces);
    if (n == 1) {
        result.frames = {keyed.frames.at(0)};
        result.provenance = {Provenance::Key};
        result.error_maps = {Tensor(1, inputs[0].height(), inputs[0].width())};
        return result;
    }
    PropagationOptions prop = job.config.propagation;
    prop.patch.seed = job.config.seed;
    PropagatedVideo video = propagate_video(keyed.frames, inputs, chain, prop);
    result.frames = std::move(video.frames);
    result.provenance = std::move(video.provenance);
    result.error_maps = std::move(video.error_maps);
    result.metrics = pixel_mse(result.frames, chain);
    return result;
}

PipelineResult run(const VideoJob& job) {
    const ToyLossyCodec codec;
    return Pipeline(codec).run(job);
}

}  // namespace v2v
