#include "odnet/neural.hpp"

#include "odnet/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace odnet {

using nlohmann::json;

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(m.row(rows[r]).begin(), m.cols, out.row(r).begin());
    return out;
}

}  // namespace

void NnModel::validate() const {
    if (w1.rows == 0 || w1.cols == 0 || w2.rows == 0) throw ShapeError("model has an empty layer");
    if (b1.size() != w1.rows || w2.cols != w1.rows || b2.size() != w2.rows)
        throw ShapeError("model layer shapes are inconsistent");
    if (!input_offset.empty() && (input_offset.size() != w1.cols || input_scale.size() != w1.cols))
        throw ShapeError("input normalization does not match input width");
    if (!all_finite(w1.data) || !all_finite(w2.data) || !all_finite(b1) || !all_finite(b2))
        throw DomainError("model has non-finite parameters");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must be in [0, 1)");
    if (!(l1 >= 0.0)) throw DomainError("l1 must be >= 0");
}

double NnModel::weight_l1() const {
    double s = 0.0;
    for (double w : w1.data) s += std::abs(w);
    for (double w : w2.data) s += std::abs(w);
    return s;
}

NnGradients NnGradients::zeros_like(const NnModel& m) {
    return {Matrix(m.w1.rows, m.w1.cols), std::vector<double>(m.b1.size(), 0.0), Matrix(m.w2.rows, m.w2.cols),
            std::vector<double>(m.b2.size(), 0.0)};
}

void TrainConfig::validate() const {
    if (hidden < 1) throw DomainError("hidden width must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must be in [0, 1)");
    if (!(l1 >= 0.0)) throw DomainError("l1 must be >= 0");
    if (!(learning_rate > 0.0)) throw DomainError("learning_rate must be > 0");
    if (epochs < 1) throw DomainError("epochs must be >= 1");
    if (batch_size < 1) throw DomainError("batch_size must be >= 1");
}

void Dataset::validate() const {
    if (inputs.rows != targets.rows) throw ShapeError("dataset inputs and targets differ in sample count");
    if (hours.size() != inputs.rows) throw ShapeError("dataset hour labels do not match sample count");
    std::vector<bool> seen(inputs.rows, false);
    for (auto set : {&train, &test})
        for (std::size_t k : *set) {
            if (k >= inputs.rows) throw ShapeError("split index out of range");
            if (seen[k]) throw ShapeError("train/test indices overlap");
            seen[k] = true;
        }
    for (double t : targets.data)
        if (!(t >= 0.0)) throw DomainError("dataset targets must be >= 0");
}

// ---------------------------------------------------------------------------

NnModel init_model(std::size_t inputs, std::size_t outputs, const TrainConfig& cfg) {
    cfg.validate();
    if (inputs == 0 || outputs == 0) throw ShapeError("model needs at least one input and one output");
    NnModel m;
    const auto hidden = static_cast<std::size_t>(cfg.hidden);
    m.dropout = cfg.dropout;
    m.l1 = cfg.l1;
    m.seed = cfg.seed;
    m.w1 = Matrix(hidden, inputs);
    m.b1.assign(hidden, 0.0);
    m.w2 = Matrix(outputs, hidden);
    m.b2.assign(outputs, 0.0);

    std::mt19937_64 rng(cfg.seed);
    auto fill = [&rng](Matrix& w, std::size_t fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : w.data) v = dist(rng);
    };
    fill(m.w1, inputs);
    fill(m.w2, hidden);
    return m;
}

ForwardCache forward(const NnModel& model, const Matrix& x, Mode mode, std::mt19937_64* rng, Exec exec) {
    if (x.cols != model.inputs())
        throw ShapeError("input width " + std::to_string(x.cols) + " does not match model input " +
                         std::to_string(model.inputs()));
    ForwardCache c;
    c.model_version = model.version;
    c.hidden = model.hidden();
    c.outputs = model.outputs();
    c.x = x;
    if (!model.input_offset.empty())
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t k = 0; k < x.cols; ++k)
                c.x(r, k) = (x(r, k) - model.input_offset[k]) * model.input_scale[k];

    kernels::gemm_nt(c.x, model.w1, model.b1, c.z1, exec);
    c.h = c.z1;
    for (double& v : c.h.data) v = std::max(0.0, v);

    if (mode == Mode::train && model.dropout > 0.0) {
        if (rng == nullptr) throw Error("train-mode forward with dropout needs a random generator");
        std::bernoulli_distribution keep(1.0 - model.dropout);
        const double scale = 1.0 / (1.0 - model.dropout);
        c.mask = Matrix(c.h.rows, c.h.cols);
        for (std::size_t k = 0; k < c.h.data.size(); ++k) {
            c.mask.data[k] = keep(*rng) ? scale : 0.0;
            c.h.data[k] *= c.mask.data[k];
        }
    }

    kernels::gemm_nt(c.h, model.w2, model.b2, c.z2, exec);
    c.out = c.z2;
    for (double& v : c.out.data) v = std::max(0.0, v);
    return c;
}

std::vector<double> predict(const NnModel& model, std::span<const double> x) {
    Matrix in(1, x.size());
    std::copy(x.begin(), x.end(), in.data.begin());
    auto c = forward(model, in, Mode::infer);
    return std::move(c.out.data);
}

double mse(const Matrix& targets, const Matrix& predictions) {
    if (targets.rows != predictions.rows || targets.cols != predictions.cols)
        throw ShapeError("targets and predictions differ in shape");
    if (targets.data.empty()) throw ShapeError("empty batch");
    double s = 0.0;
    for (std::size_t k = 0; k < targets.data.size(); ++k) {
        const double e = targets.data[k] - predictions.data[k];
        s += e * e;
    }
    return s / static_cast<double>(targets.data.size());
}

double loss(const NnModel& model, const Matrix& targets, const Matrix& predictions) {
    return mse(targets, predictions) + model.l1 * model.weight_l1();
}

NnGradients backward(const NnModel& model, const ForwardCache& cache, const Matrix& targets, Exec exec) {
    if (cache.model_version != model.version) throw Error("forward cache is stale: model changed since forward()");
    if (cache.hidden != model.hidden() || cache.outputs != model.outputs() || cache.x.cols != model.inputs())
        throw ShapeError("forward cache does not match model shape");
    if (targets.rows != cache.out.rows || targets.cols != cache.out.cols)
        throw ShapeError("targets do not match the cached batch");

    const double n = static_cast<double>(targets.data.size());
    Matrix dz2(cache.out.rows, cache.out.cols);
    for (std::size_t k = 0; k < dz2.data.size(); ++k)
        dz2.data[k] = cache.z2.data[k] > 0.0 ? 2.0 * (cache.out.data[k] - targets.data[k]) / n : 0.0;

    NnGradients g;
    kernels::gemm_tn(dz2, cache.h, g.w2, exec);
    g.b2 = kernels::column_sums(dz2);

    Matrix dz1;
    kernels::gemm_nn(dz2, model.w2, dz1, exec);
    for (std::size_t k = 0; k < dz1.data.size(); ++k) {
        if (!cache.mask.data.empty()) dz1.data[k] *= cache.mask.data[k];
        if (!(cache.z1.data[k] > 0.0)) dz1.data[k] = 0.0;
    }
    kernels::gemm_tn(dz1, cache.x, g.w1, exec);
    g.b1 = kernels::column_sums(dz1);

    if (model.l1 > 0.0) {
        for (std::size_t k = 0; k < g.w1.data.size(); ++k) g.w1.data[k] += model.l1 * sign(model.w1.data[k]);
        for (std::size_t k = 0; k < g.w2.data.size(); ++k) g.w2.data[k] += model.l1 * sign(model.w2.data[k]);
    }
    return g;
}

AdamState AdamState::for_model(const NnModel& model) {
    return {NnGradients::zeros_like(model), NnGradients::zeros_like(model), 0};
}

void adam_step(NnModel& model, const NnGradients& grads, AdamState& state, const TrainConfig& cfg) {
    if (grads.w1.data.size() != model.w1.data.size() || grads.w2.data.size() != model.w2.data.size() ||
        grads.b1.size() != model.b1.size() || grads.b2.size() != model.b2.size() ||
        state.m.w1.data.size() != model.w1.data.size() || state.m.w2.data.size() != model.w2.data.size())
        throw ShapeError("gradient or optimizer state does not match model");
    if (!all_finite(grads.w1.data) || !all_finite(grads.w2.data) || !all_finite(grads.b1) || !all_finite(grads.b2))
        throw DomainError("non-finite gradient; aborting training");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m, std::span<double> v) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            w[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
    };
    update(model.w1.data, grads.w1.data, state.m.w1.data, state.v.w1.data);
    update(model.b1, grads.b1, state.m.b1, state.v.b1);
    update(model.w2.data, grads.w2.data, state.m.w2.data, state.v.w2.data);
    update(model.b2, grads.b2, state.m.b2, state.v.b2);
    ++model.version;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.train.empty()) throw Error("training set is empty");

    TrainResult res{init_model(data.inputs.cols, data.targets.cols, cfg), {}};
    NnModel& model = res.model;

    if (cfg.normalize_inputs) {
        const std::size_t s = data.inputs.cols;
        model.input_offset.assign(s, 0.0);
        model.input_scale.assign(s, 1.0);
        for (std::size_t k = 0; k < s; ++k) {
            double mean = 0.0, var = 0.0;
            for (std::size_t r : data.train) mean += data.inputs(r, k);
            mean /= double(data.train.size());
            for (std::size_t r : data.train) var += (data.inputs(r, k) - mean) * (data.inputs(r, k) - mean);
            const double sd = std::sqrt(var / double(data.train.size()));
            model.input_offset[k] = mean;
            model.input_scale[k] = sd > 0.0 ? 1.0 / sd : 1.0;
        }
    }

    if (cfg.init_output_bias) {
        for (std::size_t m = 0; m < data.targets.cols; ++m) {
            double mean = 0.0;
            for (std::size_t r : data.train) mean += data.targets(r, m);
            model.b2[m] = std::max(0.0, mean / double(data.train.size()));
        }
        ++model.version;
    }

    // Separate stream from the one init_model consumed.
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamState state = AdamState::for_model(model);
    std::vector<std::size_t> order(data.train);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(batch, order.size() - start));
            const Matrix x = gather_rows(data.inputs, rows);
            const Matrix y = gather_rows(data.targets, rows);
            const ForwardCache cache = forward(model, x, Mode::train, &rng, cfg.exec);
            epoch_loss += loss(model, y, cache.out) * double(rows.size());
            const NnGradients g = backward(model, cache, y, cfg.exec);
            adam_step(model, g, state, cfg);
        }
        res.loss_trace.push_back(epoch_loss / double(order.size()));
    }
    return res;
}

NnMetrics prediction_metrics(const Matrix& targets, const Matrix& predictions) {
    NnMetrics m;
    m.mse = mse(targets, predictions);
    m.rmse = std::sqrt(m.mse);
    const double mean = std::accumulate(targets.data.begin(), targets.data.end(), 0.0) / double(targets.data.size());
    if (mean > 0.0)
        m.rrmse = m.rmse / mean * 100.0;
    else
        m.note = "rRMSE undefined: mean target is zero";
    return m;
}

NnMetrics evaluate_nn(const NnModel& model, const Dataset& data, std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error("evaluation set is empty");
    const Matrix x = gather_rows(data.inputs, rows);
    const Matrix y = gather_rows(data.targets, rows);
    const ForwardCache c = forward(model, x, Mode::infer);
    return prediction_metrics(y, c.out);
}

// ---------------------------------------------------------------------------

std::string dump_model(const NnModel& model) {
    model.validate();
    json doc;
    doc["format"] = "odnet-nn/1";
    doc["inputs"] = model.inputs();
    doc["hidden"] = model.hidden();
    doc["outputs"] = model.outputs();
    doc["dropout"] = model.dropout;
    doc["l1"] = model.l1;
    doc["seed"] = model.seed;
    doc["input_offset"] = model.input_offset;
    doc["input_scale"] = model.input_scale;
    doc["w1"] = model.w1.data;
    doc["b1"] = model.b1;
    doc["w2"] = model.w2.data;
    doc["b2"] = model.b2;
    return doc.dump();
}

void save_model(const NnModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model file " + path.string());
    out << dump_model(model) << '\n';
}

NnModel parse_model(const std::string& text, std::optional<std::size_t> expected_outputs) {
    NnModel m;
    try {
        const json doc = json::parse(text);
        if (doc.value("format", "") != "odnet-nn/1") throw ParseError("model: unknown checkpoint format");
        const auto s = doc.at("inputs").get<std::size_t>();
        const auto h = doc.at("hidden").get<std::size_t>();
        const auto o = doc.at("outputs").get<std::size_t>();
        m.dropout = doc.at("dropout").get<double>();
        m.l1 = doc.at("l1").get<double>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.input_offset = doc.at("input_offset").get<std::vector<double>>();
        m.input_scale = doc.at("input_scale").get<std::vector<double>>();
        m.w1 = Matrix(h, s);
        m.w1.data = doc.at("w1").get<std::vector<double>>();
        m.b1 = doc.at("b1").get<std::vector<double>>();
        m.w2 = Matrix(o, h);
        m.w2.data = doc.at("w2").get<std::vector<double>>();
        m.b2 = doc.at("b2").get<std::vector<double>>();
        if (m.w1.data.size() != h * s || m.w2.data.size() != o * h)
            throw ShapeError("model: weight arrays do not match declared shapes");
    } catch (const json::exception& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    m.validate();
    if (expected_outputs && *expected_outputs != m.outputs())
        throw ShapeError("model has " + std::to_string(m.outputs()) + " outputs, OD mask has " +
                         std::to_string(*expected_outputs) + " free entries");
    return m;
}

NnModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_outputs) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str(), expected_outputs);
}

}  // namespace odnet
