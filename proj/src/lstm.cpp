#include "climvol/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "climvol/errors.hpp"

namespace climvol::lstm {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) {
    return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Eigen::VectorXd tanh_vec(const Eigen::VectorXd& a) {
    return a.unaryExpr([](double v) { return std::tanh(v); });
}

template <typename F>
void for_each_block(LstmWeights& w, F&& f) {
    f(w.W_f.data(), w.W_f.size(), &w.W_f);
    f(w.W_i.data(), w.W_i.size(), &w.W_i);
    f(w.W_C.data(), w.W_C.size(), &w.W_C);
    f(w.W_o.data(), w.W_o.size(), &w.W_o);
}

// Row-major copy helpers; Eigen storage is column-major.
void push_row_major(std::vector<double>& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

std::size_t read_row_major(const std::vector<double>& in, std::size_t pos, Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[pos++];
    return pos;
}

std::size_t read_vec(const std::vector<double>& in, std::size_t pos, Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = in[pos++];
    return pos;
}

struct StepCache {
    Eigen::VectorXd z, f, i, g, o, c_prev, c, tc;
};

void check_exog(const MonthlySeries& series, const std::vector<MonthlySeries>& exog) {
    for (const auto& x : exog) {
        if (x.start != series.start || x.size() != series.size()) {
            throw DataError("lstm: exogenous series '" + x.label + "' is not aligned");
        }
        if (x.has_missing()) throw DataError("lstm: exogenous series contains gaps");
    }
    if (series.has_missing()) throw DataError("lstm: series contains gaps");
}

std::vector<std::vector<double>> raw(const std::vector<MonthlySeries>& exog) {
    std::vector<std::vector<double>> out;
    for (const auto& x : exog) out.push_back(x.values);
    return out;
}

}  // namespace

void LstmConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || lookback < 1 || epochs < 1) {
        throw DataError("LstmConfig: dimensions, lookback and epochs must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw DataError("LstmConfig: learning_rate must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw DataError("LstmConfig: train_fraction must be in (0,1)");
}

LstmWeights LstmWeights::zeros(int hidden_dim, int input_dim) {
    LstmWeights w;
    const int cols = hidden_dim + input_dim;
    for (auto* m : {&w.W_f, &w.W_i, &w.W_C, &w.W_o}) *m = Eigen::MatrixXd::Zero(hidden_dim, cols);
    for (auto* b : {&w.b_f, &w.b_i, &w.b_C, &w.b_o}) *b = Eigen::VectorXd::Zero(hidden_dim);
    w.W_out = Eigen::RowVectorXd::Zero(hidden_dim);
    w.b_out = 0.0;
    return w;
}

LstmWeights LstmWeights::random(int hidden_dim, int input_dim, std::uint64_t seed) {
    LstmWeights w = zeros(hidden_dim, input_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim + input_dim));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-bound, bound);
    auto fill = [&](double* p, Eigen::Index n) {
        for (Eigen::Index k = 0; k < n; ++k) p[k] = u(rng);
    };
    for_each_block(w, [&](double* p, Eigen::Index n, auto*) { fill(p, n); });
    fill(w.b_i.data(), w.b_i.size());
    fill(w.b_C.data(), w.b_C.size());
    fill(w.b_o.data(), w.b_o.size());
    fill(w.W_out.data(), w.W_out.size());
    w.b_f.setOnes();
    return w;
}

std::size_t LstmWeights::parameter_count() const {
    return static_cast<std::size_t>(4 * W_f.size() + 4 * b_f.size() + W_out.size() + 1);
}

bool LstmWeights::all_finite() const {
    return W_f.allFinite() && W_i.allFinite() && W_C.allFinite() && W_o.allFinite() && b_f.allFinite() &&
           b_i.allFinite() && b_C.allFinite() && b_o.allFinite() && W_out.allFinite() && std::isfinite(b_out);
}

std::vector<double> LstmWeights::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto* m : {&W_f, &W_i, &W_C, &W_o}) push_row_major(out, *m);
    for (const auto* b : {&b_f, &b_i, &b_C, &b_o}) out.insert(out.end(), b->data(), b->data() + b->size());
    out.insert(out.end(), W_out.data(), W_out.data() + W_out.size());
    out.push_back(b_out);
    return out;
}

void LstmWeights::assign(const std::vector<double>& flat) {
    if (flat.size() != parameter_count()) throw DataError("LstmWeights: flat parameter vector has wrong length");
    std::size_t pos = 0;
    for (auto* m : {&W_f, &W_i, &W_C, &W_o}) pos = read_row_major(flat, pos, *m);
    for (auto* b : {&b_f, &b_i, &b_C, &b_o}) pos = read_vec(flat, pos, *b);
    for (Eigen::Index i = 0; i < W_out.size(); ++i) W_out(i) = flat[pos++];
    b_out = flat[pos];
}

CellState CellState::zeros(int hidden_dim) {
    return {Eigen::VectorXd::Zero(hidden_dim), Eigen::VectorXd::Zero(hidden_dim)};
}

CellState lstm_cell(const Eigen::VectorXd& x, const CellState& prev, const LstmWeights& w, Gates* gates) {
    const int hd = w.hidden_dim();
    if (prev.h.size() != hd || prev.C.size() != hd || x.size() != w.input_dim()) {
        throw DataError("lstm_cell: shape mismatch");
    }
    Eigen::VectorXd z(hd + x.size());
    z << prev.h, x;
    Eigen::VectorXd f = sigmoid(w.W_f * z + w.b_f);
    Eigen::VectorXd i = sigmoid(w.W_i * z + w.b_i);
    Eigen::VectorXd g = tanh_vec(w.W_C * z + w.b_C);
    Eigen::VectorXd o = sigmoid(w.W_o * z + w.b_o);
    CellState next;
    next.C = f.cwiseProduct(prev.C) + i.cwiseProduct(g);
    next.h = o.cwiseProduct(tanh_vec(next.C));
    if (gates) *gates = {std::move(f), std::move(i), std::move(g), std::move(o)};
    return next;
}

double lstm_forward(const Window& window, const LstmWeights& w) {
    CellState s = CellState::zeros(w.hidden_dim());
    for (const auto& x : window) s = lstm_cell(x, s, w);
    return w.W_out.dot(s.h) + w.b_out;
}

double lstm_forward(const Window& window, const LstmWeights& w, int lookback) {
    if (static_cast<int>(window.size()) != lookback) throw DataError("lstm_forward: window length must equal lookback");
    return lstm_forward(window, w);
}

double mse_loss(const std::vector<Window>& windows, const std::vector<double>& targets, const LstmWeights& w) {
    if (windows.size() != targets.size() || windows.empty()) throw DataError("mse_loss: windows/targets mismatch");
    double loss = 0.0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const double err = lstm_forward(windows[k], w) - targets[k];
        loss += err * err;
    }
    return loss / static_cast<double>(windows.size());
}

double mse_loss_and_gradient(const std::vector<Window>& windows, const std::vector<double>& targets,
                             const LstmWeights& w, LstmWeights& grad) {
    if (windows.size() != targets.size() || windows.empty()) throw DataError("mse_loss: windows/targets mismatch");
    const int hd = w.hidden_dim();
    grad = LstmWeights::zeros(hd, w.input_dim());
    const double n = static_cast<double>(windows.size());
    double loss = 0.0;
    std::vector<StepCache> cache;

    for (std::size_t k = 0; k < windows.size(); ++k) {
        const auto& win = windows[k];
        cache.resize(win.size());
        CellState s = CellState::zeros(hd);
        for (std::size_t t = 0; t < win.size(); ++t) {
            auto& st = cache[t];
            st.z.resize(hd + win[t].size());
            st.z << s.h, win[t];
            st.c_prev = s.C;
            st.f = sigmoid(w.W_f * st.z + w.b_f);
            st.i = sigmoid(w.W_i * st.z + w.b_i);
            st.g = tanh_vec(w.W_C * st.z + w.b_C);
            st.o = sigmoid(w.W_o * st.z + w.b_o);
            st.c = st.f.cwiseProduct(s.C) + st.i.cwiseProduct(st.g);
            st.tc = tanh_vec(st.c);
            s.C = st.c;
            s.h = st.o.cwiseProduct(st.tc);
        }
        const double err = w.W_out.dot(s.h) + w.b_out - targets[k];
        loss += err * err;
        const double dpred = 2.0 * err / n;
        grad.W_out += dpred * s.h.transpose();
        grad.b_out += dpred;

        Eigen::VectorXd dh = w.W_out.transpose() * dpred;
        Eigen::VectorXd dc = Eigen::VectorXd::Zero(hd);
        for (std::size_t t = win.size(); t-- > 0;) {
            const auto& st = cache[t];
            const Eigen::VectorXd d_o = dh.cwiseProduct(st.tc);
            dc += dh.cwiseProduct(st.o).cwiseProduct((1.0 - st.tc.array().square()).matrix());
            const Eigen::VectorXd d_f = dc.cwiseProduct(st.c_prev);
            const Eigen::VectorXd d_i = dc.cwiseProduct(st.g);
            const Eigen::VectorXd d_g = dc.cwiseProduct(st.i);
            dc = dc.cwiseProduct(st.f);

            const Eigen::VectorXd a_f = d_f.array() * st.f.array() * (1.0 - st.f.array());
            const Eigen::VectorXd a_i = d_i.array() * st.i.array() * (1.0 - st.i.array());
            const Eigen::VectorXd a_g = d_g.array() * (1.0 - st.g.array().square());
            const Eigen::VectorXd a_o = d_o.array() * st.o.array() * (1.0 - st.o.array());

            grad.W_f.noalias() += a_f * st.z.transpose();
            grad.W_i.noalias() += a_i * st.z.transpose();
            grad.W_C.noalias() += a_g * st.z.transpose();
            grad.W_o.noalias() += a_o * st.z.transpose();
            grad.b_f += a_f;
            grad.b_i += a_i;
            grad.b_C += a_g;
            grad.b_o += a_o;

            const Eigen::VectorXd dz = w.W_f.transpose() * a_f + w.W_i.transpose() * a_i +
                                       w.W_C.transpose() * a_g + w.W_o.transpose() * a_o;
            dh = dz.head(hd);
        }
    }
    return loss / n;
}

MinMaxScaler MinMaxScaler::fit(std::span<const double> x) {
    if (x.empty()) throw DataError("MinMaxScaler: empty input");
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    return {*mn, *mx};
}

Window make_window(const LstmModel& model, const std::vector<double>& series,
                   const std::vector<std::vector<double>>& exog, std::size_t t) {
    const auto lookback = static_cast<std::size_t>(model.config.lookback);
    if (t < lookback || t >= series.size() + 1) throw DataError("make_window: not enough history for window");
    Window win;
    win.reserve(lookback);
    for (std::size_t tau = t + 1 - lookback; tau <= t; ++tau) {
        Eigen::VectorXd x(1 + static_cast<Eigen::Index>(exog.size()));
        x(0) = model.scalers[0].scale(series[tau - 1]);
        for (std::size_t j = 0; j < exog.size(); ++j) {
            if (tau >= exog[j].size()) throw DataError("make_window: missing exogenous value");
            x(static_cast<Eigen::Index>(j + 1)) = model.scalers[j + 1].scale(exog[j][tau]);
        }
        win.push_back(std::move(x));
    }
    return win;
}

LstmModel lstm_train(const MonthlySeries& series, const std::vector<MonthlySeries>& exog, const LstmConfig& cfg) {
    cfg.validate();
    if (cfg.input_dim != static_cast<int>(exog.size()) + 1) {
        throw DataError("lstm_train: input_dim must equal 1 + number of exogenous series");
    }
    check_exog(series, exog);
    if (static_cast<std::size_t>(cfg.lookback) >= series.size()) throw DataError("lstm_train: lookback exceeds series length");

    LstmModel model;
    model.config = cfg;
    model.train_rows = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(series.size()) + 1e-9));
    const auto lookback = static_cast<std::size_t>(cfg.lookback);
    if (model.train_rows < lookback + 10) throw DataError("lstm_train: fewer than 10 training windows");

    const std::span<const double> train_vol(series.values.data(), model.train_rows);
    model.scalers.push_back(MinMaxScaler::fit(train_vol));
    for (const auto& x : exog) model.scalers.push_back(MinMaxScaler::fit(std::span<const double>(x.values.data(), model.train_rows)));

    const auto ex = raw(exog);
    std::vector<Window> windows;
    std::vector<double> targets;
    for (std::size_t t = lookback; t < model.train_rows; ++t) {
        windows.push_back(make_window(model, series.values, ex, t));
        targets.push_back(model.scalers[0].scale(series[t]));
    }

    model.weights = LstmWeights::random(cfg.hidden_dim, cfg.input_dim, cfg.seed);
    LstmWeights grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double loss = mse_loss_and_gradient(windows, targets, model.weights, grad);
        if (!std::isfinite(loss)) throw NumericalError("lstm_train: non-finite loss (learning rate too large?)");
        model.loss_history.push_back(loss);
        auto flat = model.weights.flatten();
        auto g = grad.flatten();
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        const double factor = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= cfg.learning_rate * factor * g[k];
        model.weights.assign(flat);
    }
    if (!model.weights.all_finite()) throw NumericalError("lstm_train: weights diverged");
    return model;
}

MonthlySeries lstm_rolling_forecast(const LstmModel& model, const MonthlySeries& series,
                                    const std::vector<MonthlySeries>& exog, std::size_t first) {
    check_exog(series, exog);
    if (static_cast<int>(exog.size()) + 1 != model.config.input_dim) throw DataError("lstm_rolling_forecast: exog count mismatch");
    if (first < static_cast<std::size_t>(model.config.lookback)) throw DataError("lstm_rolling_forecast: history shorter than lookback");
    const auto ex = raw(exog);
    std::vector<double> out;
    for (std::size_t t = first; t < series.size(); ++t) {
        out.push_back(model.scalers[0].inverse(lstm_forward(make_window(model, series.values, ex, t), model.weights)));
    }
    return MonthlySeries(series.month_at(first), std::move(out), series.label + " lstm one-step forecast");
}

MonthlySeries lstm_forecast(const LstmModel& model, const MonthlySeries& history,
                            const std::vector<MonthlySeries>& history_exog,
                            const std::vector<std::vector<double>>& future_exog, std::size_t horizon) {
    check_exog(history, history_exog);
    if (history.size() < static_cast<std::size_t>(model.config.lookback)) {
        throw DataError("lstm_forecast: history shorter than lookback");
    }
    if (future_exog.size() != history_exog.size() || static_cast<int>(future_exog.size()) + 1 != model.config.input_dim) {
        throw DataError("lstm_forecast: exog column count mismatch");
    }
    for (const auto& col : future_exog) {
        if (col.size() < horizon) throw DataError("lstm_forecast: missing future exog values");
    }
    std::vector<double> series = history.values;
    auto ex = raw(history_exog);
    for (std::size_t j = 0; j < ex.size(); ++j) ex[j].insert(ex[j].end(), future_exog[j].begin(), future_exog[j].begin() + static_cast<long>(horizon));
    std::vector<double> out;
    for (std::size_t h = 0; h < horizon; ++h) {
        const std::size_t t = history.size() + h;
        const double pred = model.scalers[0].inverse(lstm_forward(make_window(model, series, ex, t), model.weights));
        out.push_back(pred);
        series.push_back(pred);
    }
    return MonthlySeries(history.month_at(history.size()), std::move(out), history.label + " lstm forecast");
}

nlohmann::json to_json(const LstmModel& model) {
    const auto& w = model.weights;
    auto mat = [](const Eigen::MatrixXd& m) {
        std::vector<double> v;
        push_row_major(v, m);
        return nlohmann::json{{"shape", {m.rows(), m.cols()}}, {"values", v}};
    };
    auto vec = [](const Eigen::VectorXd& b) {
        return nlohmann::json{{"shape", {b.size()}}, {"values", std::vector<double>(b.data(), b.data() + b.size())}};
    };
    nlohmann::json scalers = nlohmann::json::array();
    for (const auto& s : model.scalers) scalers.push_back({{"min", s.min}, {"max", s.max}});
    const auto& c = model.config;
    return {{"config",
             {{"input_dim", c.input_dim},
              {"hidden_dim", c.hidden_dim},
              {"lookback", c.lookback},
              {"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"clip_norm", c.clip_norm},
              {"seed", c.seed},
              {"train_fraction", c.train_fraction}}},
            {"weights",
             {{"W_f", mat(w.W_f)},
              {"W_i", mat(w.W_i)},
              {"W_C", mat(w.W_C)},
              {"W_o", mat(w.W_o)},
              {"b_f", vec(w.b_f)},
              {"b_i", vec(w.b_i)},
              {"b_C", vec(w.b_C)},
              {"b_o", vec(w.b_o)},
              {"W_out", mat(Eigen::MatrixXd(w.W_out))},
              {"b_out", w.b_out}}},
            {"scalers", scalers},
            {"train_rows", model.train_rows},
            {"final_loss", model.loss_history.empty() ? 0.0 : model.loss_history.back()}};
}

LstmModel model_from_json(const nlohmann::json& j) {
    LstmModel m;
    const auto& c = j.at("config");
    m.config.input_dim = c.at("input_dim");
    m.config.hidden_dim = c.at("hidden_dim");
    m.config.lookback = c.at("lookback");
    m.config.epochs = c.at("epochs");
    m.config.learning_rate = c.at("learning_rate");
    m.config.clip_norm = c.at("clip_norm");
    m.config.seed = c.at("seed");
    m.config.train_fraction = c.at("train_fraction");
    m.config.validate();
    m.weights = LstmWeights::zeros(m.config.hidden_dim, m.config.input_dim);
    const auto& w = j.at("weights");
    auto load_mat = [&](const char* name, Eigen::MatrixXd& dst) {
        const auto& node = w.at(name);
        const auto shape = node.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2 || shape[0] != dst.rows() || shape[1] != dst.cols()) {
            throw DataError(std::string("lstm weights: bad shape for ") + name);
        }
        read_row_major(node.at("values").get<std::vector<double>>(), 0, dst);
    };
    auto load_vec = [&](const char* name, Eigen::VectorXd& dst) {
        const auto vals = w.at(name).at("values").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(vals.size()) != dst.size()) throw DataError(std::string("lstm weights: bad shape for ") + name);
        read_vec(vals, 0, dst);
    };
    load_mat("W_f", m.weights.W_f);
    load_mat("W_i", m.weights.W_i);
    load_mat("W_C", m.weights.W_C);
    load_mat("W_o", m.weights.W_o);
    load_vec("b_f", m.weights.b_f);
    load_vec("b_i", m.weights.b_i);
    load_vec("b_C", m.weights.b_C);
    load_vec("b_o", m.weights.b_o);
    Eigen::MatrixXd out(1, m.config.hidden_dim);
    load_mat("W_out", out);
    m.weights.W_out = out.row(0);
    m.weights.b_out = w.at("b_out");
    for (const auto& s : j.at("scalers")) m.scalers.push_back({s.at("min").get<double>(), s.at("max").get<double>()});
    m.train_rows = j.at("train_rows");
    return m;
}

}  // namespace climvol::lstm
