#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "climvol/series.hpp"

namespace climvol::lstm {

struct LstmConfig {
    int input_dim = 3;  // volatility + weather covariates
    int hidden_dim = 16;
    int lookback = 12;
    int epochs = 500;
    double learning_rate = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;

    void validate() const;
};

// Gate weights act on the concatenation [h_{t-1}, x_t].
struct LstmWeights {
    Eigen::MatrixXd W_f, W_i, W_C, W_o;
    Eigen::VectorXd b_f, b_i, b_C, b_o;
    Eigen::RowVectorXd W_out;
    double b_out = 0.0;

    static LstmWeights zeros(int hidden_dim, int input_dim);
    // Uniform in +-1/sqrt(hidden+input), forget-gate bias 1.
    static LstmWeights random(int hidden_dim, int input_dim, std::uint64_t seed);

    int hidden_dim() const { return static_cast<int>(b_f.size()); }
    int input_dim() const { return static_cast<int>(W_f.cols()) - hidden_dim(); }
    std::size_t parameter_count() const;
    bool all_finite() const;

    // Flat view in a fixed order: W_f, W_i, W_C, W_o (row-major), b_f, b_i,
    // b_C, b_o, W_out, b_out.
    std::vector<double> flatten() const;
    void assign(const std::vector<double>& flat);
};

struct CellState {
    Eigen::VectorXd h;
    Eigen::VectorXd C;

    static CellState zeros(int hidden_dim);
};

struct Gates {
    Eigen::VectorXd f, i, C_tilde, o;
};

CellState lstm_cell(const Eigen::VectorXd& x, const CellState& prev, const LstmWeights& w, Gates* gates = nullptr);

using Window = std::vector<Eigen::VectorXd>;

// Unrolls the cell from the zero state; returns W_out h_T + b_out.
double lstm_forward(const Window& window, const LstmWeights& w, int lookback);
double lstm_forward(const Window& window, const LstmWeights& w);

// Mean squared error over (window, target) pairs and its gradient by
// backpropagation through time.
double mse_loss(const std::vector<Window>& windows, const std::vector<double>& targets, const LstmWeights& w);
double mse_loss_and_gradient(const std::vector<Window>& windows, const std::vector<double>& targets,
                             const LstmWeights& w, LstmWeights& grad);

struct MinMaxScaler {
    double min = 0.0;
    double max = 1.0;

    static MinMaxScaler fit(std::span<const double> x);
    double range() const { return max > min ? max - min : 1.0; }
    double scale(double x) const { return (x - min) / range(); }
    double inverse(double s) const { return s * range() + min; }
};

struct LstmModel {
    LstmConfig config;
    LstmWeights weights;
    std::vector<MinMaxScaler> scalers;  // [0] volatility, then one per exog column
    std::vector<double> loss_history;   // training loss at the start of each epoch
    std::size_t train_rows = 0;
};

// Window ending at index t (inclusive) predicts series[t]: step tau carries
// (series[tau-1], exog[tau]) for tau in t-lookback+1..t, all scaled.
Window make_window(const LstmModel& model, const std::vector<double>& series,
                   const std::vector<std::vector<double>>& exog, std::size_t t);

LstmModel lstm_train(const MonthlySeries& series, const std::vector<MonthlySeries>& exog, const LstmConfig& cfg);

// Rolling one-step predictions for indices first..end of `series`, each using
// realized lagged values.
MonthlySeries lstm_rolling_forecast(const LstmModel& model, const MonthlySeries& series,
                                    const std::vector<MonthlySeries>& exog, std::size_t first);

// Recursive multi-step forecasts after the end of `history`, feeding
// predictions back as lagged inputs.
MonthlySeries lstm_forecast(const LstmModel& model, const MonthlySeries& history,
                            const std::vector<MonthlySeries>& history_exog,
                            const std::vector<std::vector<double>>& future_exog, std::size_t horizon);

nlohmann::json to_json(const LstmModel& model);
LstmModel model_from_json(const nlohmann::json& j);

}  // namespace climvol::lstm
