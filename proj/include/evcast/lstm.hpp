#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "evcast/csv.hpp"
#include "evcast/errors.hpp"
#include "evcast/numeric.hpp"
#include "evcast/preprocess.hpp"
#include "evcast/rng.hpp"
#include "evcast/tuning.hpp"

namespace evcast {

struct LstmConfig {
    int depth = 1;
    bool bidirectional = false;
    int units = 50;
    double learning_rate = 1e-3;
    double dropout = 0.0;
    int window = 7;
    int epochs = 100;
    int batch = 7;
    std::uint64_t seed = 0;

    bool operator==(const LstmConfig&) const = default;
};

inline void validate_lstm_config(const LstmConfig& c) {
    if (c.depth != 1 && c.depth != 2) throw UsageError("lstm config: depth must be 1 or 2");
    if (c.units < 1) throw UsageError("lstm config: units must be >= 1");
    if (c.learning_rate <= 0.0) throw UsageError("lstm config: learning_rate must be positive");
    if (c.dropout < 0.0 || c.dropout >= 1.0)
        throw UsageError("lstm config: dropout must lie in [0, 1)");
    if (c.window < 1 || c.epochs < 1 || c.batch < 1)
        throw UsageError("lstm config: window, epochs, and batch must be >= 1");
}

namespace detail {

/// One direction of one layer. Rows of Wx/Wh/b stack the four gates in
/// [input, forget, candidate, output] order, `units` rows each.
struct LstmCell {
    Eigen::MatrixXd Wx;
    Eigen::MatrixXd Wh;
    Eigen::MatrixXd b;
};

inline Eigen::MatrixXd lstm_sigmoid(const Eigen::MatrixXd& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

/// Per-timestep activations kept for backpropagation. h[t] is the hidden
/// state after consuming xs[t] in the order the cell saw it.
struct CellCache {
    std::vector<Eigen::MatrixXd> i, f, g, o, c, tc, h;
};

inline void cell_forward(const LstmCell& P, const std::vector<Eigen::MatrixXd>& xs,
                         CellCache& cc) {
    const int T = static_cast<int>(xs.size());
    const int u = static_cast<int>(P.Wh.cols());
    const int B = static_cast<int>(xs[0].cols());
    cc = {};
    cc.i.reserve(xs.size());
    Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(u, B);
    Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(u, B);
    for (int t = 0; t < T; ++t) {
        Eigen::MatrixXd z = P.Wx * xs[static_cast<std::size_t>(t)] + P.Wh * h_prev;
        z.colwise() += P.b.col(0);
        Eigen::MatrixXd i = lstm_sigmoid(z.topRows(u));
        Eigen::MatrixXd f = lstm_sigmoid(z.middleRows(u, u));
        Eigen::MatrixXd g = z.middleRows(2 * u, u).array().tanh().matrix();
        Eigen::MatrixXd o = lstm_sigmoid(z.bottomRows(u));
        Eigen::MatrixXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
        Eigen::MatrixXd tc = c.array().tanh().matrix();
        Eigen::MatrixXd h = o.cwiseProduct(tc);
        cc.i.push_back(std::move(i));
        cc.f.push_back(std::move(f));
        cc.g.push_back(std::move(g));
        cc.o.push_back(std::move(o));
        cc.c.push_back(c);
        cc.tc.push_back(std::move(tc));
        cc.h.push_back(h);
        h_prev = std::move(h);
        c_prev = std::move(c);
    }
}

/// dH[t] is the external gradient on h[t] (cell time order). Returns the
/// gradient with respect to each xs[t] and accumulates parameter gradients
/// into G, which must be pre-sized to match P.
inline std::vector<Eigen::MatrixXd> cell_backward(const LstmCell& P,
                                                  const std::vector<Eigen::MatrixXd>& xs,
                                                  const CellCache& cc,
                                                  const std::vector<Eigen::MatrixXd>& dH,
                                                  LstmCell& G) {
    const int T = static_cast<int>(xs.size());
    const int u = static_cast<int>(P.Wh.cols());
    const int B = static_cast<int>(xs[0].cols());
    std::vector<Eigen::MatrixXd> dX(xs.size());
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(u, B);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(u, B);
    Eigen::MatrixXd dZ(4 * u, B);
    for (int t = T - 1; t >= 0; --t) {
        const std::size_t ts = static_cast<std::size_t>(t);
        const Eigen::MatrixXd dh = dH[ts] + dh_next;
        const Eigen::MatrixXd dov = dh.cwiseProduct(cc.tc[ts]);
        const Eigen::MatrixXd dc =
            dh.cwiseProduct(cc.o[ts])
                .cwiseProduct((1.0 - cc.tc[ts].array().square()).matrix()) +
            dc_next;
        const Eigen::MatrixXd di = dc.cwiseProduct(cc.g[ts]);
        const Eigen::MatrixXd dg = dc.cwiseProduct(cc.i[ts]);
        const Eigen::MatrixXd df =
            t > 0 ? dc.cwiseProduct(cc.c[ts - 1]).eval()
                  : Eigen::MatrixXd::Zero(u, B).eval();
        dc_next = dc.cwiseProduct(cc.f[ts]);

        dZ.topRows(u) =
            di.cwiseProduct(cc.i[ts]).cwiseProduct((1.0 - cc.i[ts].array()).matrix());
        dZ.middleRows(u, u) =
            df.cwiseProduct(cc.f[ts]).cwiseProduct((1.0 - cc.f[ts].array()).matrix());
        dZ.middleRows(2 * u, u) = dg.cwiseProduct((1.0 - cc.g[ts].array().square()).matrix());
        dZ.bottomRows(u) =
            dov.cwiseProduct(cc.o[ts]).cwiseProduct((1.0 - cc.o[ts].array()).matrix());

        G.Wx += dZ * xs[ts].transpose();
        if (t > 0) G.Wh += dZ * cc.h[ts - 1].transpose();
        G.b.col(0) += dZ.rowwise().sum();
        dX[ts] = P.Wx.transpose() * dZ;
        dh_next = P.Wh.transpose() * dZ;
    }
    return dX;
}

}  // namespace detail

/// Recurrent forecaster. layers[L][0] is the forward direction, layers[L][1]
/// the reverse direction (allocated only when bidirectional). The linear head
/// consumes the forward pass's last hidden state, concatenated with the
/// reverse pass's final state when bidirectional.
struct LstmModel {
    LstmConfig config;
    int input_dim = 0;
    std::vector<std::array<detail::LstmCell, 2>> layers;
    Eigen::MatrixXd head_w;
    Eigen::MatrixXd head_b;
    std::vector<double> loss_curve;

    int dir_count() const { return config.bidirectional ? 2 : 1; }
    int layer_out_dim() const { return config.units * dir_count(); }

    double predict_window(const std::vector<std::vector<double>>& window_rows) const;
};

namespace detail {

inline void collect_lstm_tensors(const LstmModel& m,
                                 std::vector<std::pair<std::string, const Eigen::MatrixXd*>>& out) {
    for (std::size_t L = 0; L < m.layers.size(); ++L) {
        for (int dir = 0; dir < m.dir_count(); ++dir) {
            const std::string base =
                "layer" + std::to_string(L) + (dir == 0 ? ".fwd." : ".bwd.");
            const LstmCell& cell = m.layers[L][static_cast<std::size_t>(dir)];
            out.emplace_back(base + "Wx", &cell.Wx);
            out.emplace_back(base + "Wh", &cell.Wh);
            out.emplace_back(base + "b", &cell.b);
        }
    }
    out.emplace_back("head.w", &m.head_w);
    out.emplace_back("head.b", &m.head_b);
}

inline std::vector<std::pair<std::string, Eigen::MatrixXd*>> lstm_tensors(LstmModel& m) {
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> cv;
    collect_lstm_tensors(m, cv);
    std::vector<std::pair<std::string, Eigen::MatrixXd*>> out;
    out.reserve(cv.size());
    for (auto& [name, p] : cv) out.emplace_back(name, const_cast<Eigen::MatrixXd*>(p));
    return out;
}

/// Allocates every tensor with the right shape, filled with zeros.
inline LstmModel lstm_skeleton(const LstmConfig& cfg, int input_dim) {
    LstmModel m;
    m.config = cfg;
    m.input_dim = input_dim;
    const int u = cfg.units;
    for (int L = 0; L < cfg.depth; ++L) {
        const int in_dim = L == 0 ? input_dim : m.layer_out_dim();
        std::array<LstmCell, 2> pair;
        for (int dir = 0; dir < m.dir_count(); ++dir) {
            pair[static_cast<std::size_t>(dir)] = {Eigen::MatrixXd::Zero(4 * u, in_dim),
                                                   Eigen::MatrixXd::Zero(4 * u, u),
                                                   Eigen::MatrixXd::Zero(4 * u, 1)};
        }
        m.layers.push_back(std::move(pair));
    }
    m.head_w = Eigen::MatrixXd::Zero(m.layer_out_dim(), 1);
    m.head_b = Eigen::MatrixXd::Zero(1, 1);
    return m;
}

inline Eigen::MatrixXd orthogonal_matrix(int n, Rng& rng) {
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd R = qr.matrixQR();
    for (int j = 0; j < n; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    return Q;
}

/// Scaled-uniform input and head weights, per-gate orthogonal recurrent
/// blocks, zero biases except the forget gate at 1.
inline void init_lstm_params(LstmModel& m, Rng& rng) {
    const int u = m.config.units;
    for (auto& pair : m.layers) {
        for (int dir = 0; dir < m.dir_count(); ++dir) {
            LstmCell& cell = pair[static_cast<std::size_t>(dir)];
            const int in_dim = static_cast<int>(cell.Wx.cols());
            const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + 4 * u));
            for (int i = 0; i < cell.Wx.rows(); ++i)
                for (int j = 0; j < cell.Wx.cols(); ++j) cell.Wx(i, j) = rng.uniform(-limit, limit);
            for (int gate = 0; gate < 4; ++gate)
                cell.Wh.middleRows(gate * u, u) = orthogonal_matrix(u, rng);
            cell.b.setZero();
            cell.b.col(0).segment(u, u).setConstant(1.0);
        }
    }
    const double hl = std::sqrt(6.0 / static_cast<double>(m.layer_out_dim() + 1));
    for (int i = 0; i < m.head_w.rows(); ++i) m.head_w(i, 0) = rng.uniform(-hl, hl);
    m.head_b.setZero();
}

struct NetCache {
    struct Layer {
        std::vector<Eigen::MatrixXd> inputs;
        std::array<CellCache, 2> dir;
        std::vector<Eigen::MatrixXd> out;
        std::vector<Eigen::MatrixXd> mask;
    };
    std::vector<Layer> layers;
    Eigen::MatrixXd head_in;
    Eigen::RowVectorXd pred;
};

/// Full forward pass over a batch. xs[t] is input_dim x B. Dropout masks are
/// drawn (and recorded) only when training with a positive rate.
inline void net_forward(const LstmModel& m, const std::vector<Eigen::MatrixXd>& xs, bool training,
                        Rng* drop_rng, NetCache& nc) {
    const int T = static_cast<int>(xs.size());
    const int B = static_cast<int>(xs[0].cols());
    const int u = m.config.units;
    const bool bi = m.config.bidirectional;
    const double p = m.config.dropout;
    nc.layers.assign(static_cast<std::size_t>(m.config.depth), {});

    std::vector<Eigen::MatrixXd> cur = xs;
    for (int L = 0; L < m.config.depth; ++L) {
        NetCache::Layer& lc = nc.layers[static_cast<std::size_t>(L)];
        lc.inputs = cur;
        cell_forward(m.layers[static_cast<std::size_t>(L)][0], lc.inputs, lc.dir[0]);
        if (bi) {
            std::vector<Eigen::MatrixXd> rev(lc.inputs.size());
            for (int t = 0; t < T; ++t)
                rev[static_cast<std::size_t>(t)] = lc.inputs[static_cast<std::size_t>(T - 1 - t)];
            cell_forward(m.layers[static_cast<std::size_t>(L)][1], rev, lc.dir[1]);
        }
        lc.out.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            const std::size_t ts = static_cast<std::size_t>(t);
            if (!bi) {
                lc.out[ts] = lc.dir[0].h[ts];
            } else {
                Eigen::MatrixXd o(2 * u, B);
                o.topRows(u) = lc.dir[0].h[ts];
                o.bottomRows(u) = lc.dir[1].h[static_cast<std::size_t>(T - 1 - t)];
                lc.out[ts] = std::move(o);
            }
        }
        if (training && p > 0.0 && drop_rng != nullptr) {
            const double keep = 1.0 - p;
            lc.mask.resize(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                const std::size_t ts = static_cast<std::size_t>(t);
                Eigen::MatrixXd mask(lc.out[ts].rows(), lc.out[ts].cols());
                for (int i = 0; i < mask.rows(); ++i)
                    for (int j = 0; j < mask.cols(); ++j)
                        mask(i, j) = drop_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                lc.out[ts] = lc.out[ts].cwiseProduct(mask);
                lc.mask[ts] = std::move(mask);
            }
        }
        cur = lc.out;
    }

    if (!bi) {
        nc.head_in = cur[static_cast<std::size_t>(T - 1)];
    } else {
        nc.head_in.resize(2 * u, B);
        nc.head_in.topRows(u) = cur[static_cast<std::size_t>(T - 1)].topRows(u);
        nc.head_in.bottomRows(u) = cur[0].bottomRows(u);
    }
    nc.pred = (m.head_w.transpose() * nc.head_in).row(0);
    nc.pred.array() += m.head_b(0, 0);
}

/// Parameter gradients shaped exactly like the model tensors.
struct NetGrads {
    std::vector<std::array<LstmCell, 2>> layers;
    Eigen::MatrixXd head_w;
    Eigen::MatrixXd head_b;
};

inline NetGrads zero_grads(const LstmModel& m) {
    NetGrads g;
    for (const auto& pair : m.layers) {
        std::array<LstmCell, 2> gp;
        for (int dir = 0; dir < m.dir_count(); ++dir) {
            const LstmCell& cell = pair[static_cast<std::size_t>(dir)];
            gp[static_cast<std::size_t>(dir)] = {Eigen::MatrixXd::Zero(cell.Wx.rows(), cell.Wx.cols()),
                                                 Eigen::MatrixXd::Zero(cell.Wh.rows(), cell.Wh.cols()),
                                                 Eigen::MatrixXd::Zero(cell.b.rows(), 1)};
        }
        g.layers.push_back(std::move(gp));
    }
    g.head_w = Eigen::MatrixXd::Zero(m.head_w.rows(), 1);
    g.head_b = Eigen::MatrixXd::Zero(1, 1);
    return g;
}

inline std::vector<Eigen::MatrixXd*> grad_tensor_list(NetGrads& g, const LstmModel& m) {
    std::vector<Eigen::MatrixXd*> out;
    for (auto& pair : g.layers) {
        for (int dir = 0; dir < m.dir_count(); ++dir) {
            LstmCell& cell = pair[static_cast<std::size_t>(dir)];
            out.push_back(&cell.Wx);
            out.push_back(&cell.Wh);
            out.push_back(&cell.b);
        }
    }
    out.push_back(&g.head_w);
    out.push_back(&g.head_b);
    return out;
}

inline void net_backward(const LstmModel& m, NetCache& nc, const Eigen::RowVectorXd& dpred,
                         NetGrads& G) {
    const int T = static_cast<int>(nc.layers[0].inputs.size());
    const int B = static_cast<int>(dpred.cols());
    const int u = m.config.units;
    const bool bi = m.config.bidirectional;

    G.head_w += nc.head_in * dpred.transpose();
    G.head_b(0, 0) += dpred.sum();
    const Eigen::MatrixXd dhead_in = m.head_w * dpred;

    std::vector<Eigen::MatrixXd> dOut(
        static_cast<std::size_t>(T),
        Eigen::MatrixXd::Zero(m.layer_out_dim(), B));
    if (!bi) {
        dOut[static_cast<std::size_t>(T - 1)] = dhead_in;
    } else {
        dOut[static_cast<std::size_t>(T - 1)].topRows(u) += dhead_in.topRows(u);
        dOut[0].bottomRows(u) += dhead_in.bottomRows(u);
    }

    for (int L = m.config.depth - 1; L >= 0; --L) {
        NetCache::Layer& lc = nc.layers[static_cast<std::size_t>(L)];
        if (!lc.mask.empty())
            for (int t = 0; t < T; ++t) {
                const std::size_t ts = static_cast<std::size_t>(t);
                dOut[ts] = dOut[ts].cwiseProduct(lc.mask[ts]);
            }

        std::vector<Eigen::MatrixXd> dHf(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            dHf[static_cast<std::size_t>(t)] =
                bi ? dOut[static_cast<std::size_t>(t)].topRows(u).eval()
                   : dOut[static_cast<std::size_t>(t)];

        auto& gl = G.layers[static_cast<std::size_t>(L)];
        std::vector<Eigen::MatrixXd> dIn =
            cell_backward(m.layers[static_cast<std::size_t>(L)][0], lc.inputs, lc.dir[0], dHf,
                          gl[0]);
        if (bi) {
            std::vector<Eigen::MatrixXd> rev(lc.inputs.size());
            std::vector<Eigen::MatrixXd> dHb(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                rev[static_cast<std::size_t>(t)] = lc.inputs[static_cast<std::size_t>(T - 1 - t)];
                dHb[static_cast<std::size_t>(t)] =
                    dOut[static_cast<std::size_t>(T - 1 - t)].bottomRows(u);
            }
            const std::vector<Eigen::MatrixXd> dXb =
                cell_backward(m.layers[static_cast<std::size_t>(L)][1], rev, lc.dir[1], dHb, gl[1]);
            for (int t = 0; t < T; ++t)
                dIn[static_cast<std::size_t>(t)] += dXb[static_cast<std::size_t>(T - 1 - t)];
        }
        dOut = std::move(dIn);
    }
}

/// xs[t].col(j) = rows[starts[j] + t]; each window spans cfg.window rows.
inline std::vector<Eigen::MatrixXd> make_window_batch(const std::vector<std::vector<double>>& rows,
                                                      const std::vector<int>& starts, int window) {
    const int d = static_cast<int>(rows[0].size());
    const int B = static_cast<int>(starts.size());
    std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(window), Eigen::MatrixXd(d, B));
    for (int t = 0; t < window; ++t)
        for (int j = 0; j < B; ++j) {
            const auto& r = rows[static_cast<std::size_t>(starts[static_cast<std::size_t>(j)] + t)];
            for (int k = 0; k < d; ++k) xs[static_cast<std::size_t>(t)](k, j) = r[static_cast<std::size_t>(k)];
        }
    return xs;
}

}  // namespace detail

inline double LstmModel::predict_window(const std::vector<std::vector<double>>& window_rows) const {
    if (static_cast<int>(window_rows.size()) != config.window)
        throw UsageError("lstm predict: window length mismatch");
    for (const auto& r : window_rows)
        if (static_cast<int>(r.size()) != input_dim)
            throw UsageError("lstm predict: feature width mismatch");
    std::vector<int> starts = {0};
    const auto xs = detail::make_window_batch(window_rows, starts, config.window);
    detail::NetCache nc;
    detail::net_forward(*this, xs, false, nullptr, nc);
    return nc.pred(0);
}

/// Predictions for targets at positions [t_begin, t_end); each uses the
/// `window` feature rows immediately before its position.
inline std::vector<double> lstm_predict_range(const LstmModel& m,
                                              const std::vector<std::vector<double>>& rows,
                                              int t_begin, int t_end) {
    if (t_begin < m.config.window || t_end > static_cast<int>(rows.size()) || t_begin > t_end)
        throw UsageError("lstm_predict_range: range outside available windows");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(t_end - t_begin));
    constexpr int kChunk = 64;
    for (int at = t_begin; at < t_end; at += kChunk) {
        const int hi = std::min(t_end, at + kChunk);
        std::vector<int> starts;
        for (int t = at; t < hi; ++t) starts.push_back(t - m.config.window);
        const auto xs = detail::make_window_batch(rows, starts, m.config.window);
        detail::NetCache nc;
        detail::net_forward(m, xs, false, nullptr, nc);
        for (int j = 0; j < static_cast<int>(starts.size()); ++j) out.push_back(nc.pred(j));
    }
    return out;
}

/// Mean squared error of the fitted model over every complete window.
inline double lstm_training_mse(const LstmModel& m, const std::vector<std::vector<double>>& rows,
                                const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    const auto pred = lstm_predict_range(m, rows, m.config.window, n);
    std::vector<double> sq;
    sq.reserve(pred.size());
    for (int t = m.config.window; t < n; ++t) {
        const double e = pred[static_cast<std::size_t>(t - m.config.window)] -
                         y[static_cast<std::size_t>(t)];
        sq.push_back(e * e);
    }
    return stable_sum(std::move(sq)) / static_cast<double>(pred.size());
}

/// Trains on every complete window of `rows` against the aligned target in
/// `y` using Adam on mean squared error. When patience > 0, training stops
/// once the epoch loss has not improved for that many consecutive epochs.
inline LstmModel fit_lstm(const std::vector<std::vector<double>>& rows,
                          const std::vector<double>& y, const LstmConfig& cfg, int patience = 0) {
    validate_lstm_config(cfg);
    if (rows.size() != y.size()) throw DataError("fit_lstm: rows and y length mismatch");
    const int n = static_cast<int>(y.size());
    if (n <= cfg.window) throw DataError("fit_lstm: series must be longer than the window");
    const int d = static_cast<int>(rows[0].size());
    if (d < 1) throw DataError("fit_lstm: empty feature rows");
    for (const auto& r : rows)
        if (static_cast<int>(r.size()) != d) throw DataError("fit_lstm: ragged feature rows");

    LstmModel model = detail::lstm_skeleton(cfg, d);
    Rng init_rng(derive_seed(cfg.seed, "lstm-init"));
    detail::init_lstm_params(model, init_rng);

    const int S = n - cfg.window;
    std::vector<int> order(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) order[static_cast<std::size_t>(s)] = s;

    const auto params = detail::lstm_tensors(model);
    std::vector<Eigen::MatrixXd> adam_m, adam_v;
    for (const auto& [name, p] : params) {
        adam_m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        adam_v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
    long adam_t = 0;

    double best_loss = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, "lstm-shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng drop_rng(derive_seed(cfg.seed, "lstm-dropout", static_cast<std::uint64_t>(epoch)));

        double epoch_sq = 0.0;
        for (int at = 0; at < S; at += cfg.batch) {
            const int B = std::min(cfg.batch, S - at);
            std::vector<int> starts(static_cast<std::size_t>(B));
            Eigen::RowVectorXd yb(B);
            for (int j = 0; j < B; ++j) {
                const int s = order[static_cast<std::size_t>(at + j)];
                starts[static_cast<std::size_t>(j)] = s;
                yb(j) = y[static_cast<std::size_t>(s + cfg.window)];
            }
            const auto xs = detail::make_window_batch(rows, starts, cfg.window);
            detail::NetCache nc;
            detail::net_forward(model, xs, true, &drop_rng, nc);
            const Eigen::RowVectorXd err = nc.pred - yb;
            epoch_sq += err.squaredNorm();
            const Eigen::RowVectorXd dpred = (2.0 / static_cast<double>(B)) * err;

            detail::NetGrads grads = detail::zero_grads(model);
            detail::net_backward(model, nc, dpred, grads);
            const auto gl = detail::grad_tensor_list(grads, model);

            ++adam_t;
            const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(adam_t));
            for (std::size_t k = 0; k < params.size(); ++k) {
                adam_m[k] = 0.9 * adam_m[k] + 0.1 * (*gl[k]);
                adam_v[k] = 0.999 * adam_v[k] + 0.001 * gl[k]->cwiseProduct(*gl[k]);
                params[k].second->array() -=
                    cfg.learning_rate * (adam_m[k].array() / bc1) /
                    ((adam_v[k].array() / bc2).sqrt() + 1e-8);
            }
        }
        const double epoch_loss = epoch_sq / static_cast<double>(S);
        model.loss_curve.push_back(epoch_loss);
        if (patience > 0) {
            if (epoch_loss < best_loss * (1.0 - 1e-7)) {
                best_loss = epoch_loss;
                stale = 0;
            } else if (++stale >= patience) {
                break;
            }
        }
    }
    return model;
}

/// Maximum relative disagreement between analytic and central-difference
/// gradients, overall and per tensor. Dropout is ignored (evaluation mode).
struct GradCheckReport {
    double max_rel = 0.0;
    std::map<std::string, double> per_tensor;
};

inline GradCheckReport grad_check(LstmModel& model, const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& y, int per_tensor = 10) {
    const int n = static_cast<int>(y.size());
    if (static_cast<int>(rows.size()) != n || n <= model.config.window)
        throw DataError("grad_check: series must be longer than the window");
    const int B = std::min(8, n - model.config.window);
    std::vector<int> starts(static_cast<std::size_t>(B));
    Eigen::RowVectorXd yb(B);
    for (int j = 0; j < B; ++j) {
        starts[static_cast<std::size_t>(j)] = j;
        yb(j) = y[static_cast<std::size_t>(j + model.config.window)];
    }
    const auto xs = detail::make_window_batch(rows, starts, model.config.window);

    const auto loss_at = [&]() {
        detail::NetCache nc;
        detail::net_forward(model, xs, false, nullptr, nc);
        return (nc.pred - yb).squaredNorm() / static_cast<double>(B);
    };

    detail::NetCache nc;
    detail::net_forward(model, xs, false, nullptr, nc);
    const Eigen::RowVectorXd dpred = (2.0 / static_cast<double>(B)) * (nc.pred - yb);
    detail::NetGrads grads = detail::zero_grads(model);
    detail::net_backward(model, nc, dpred, grads);
    const auto gl = detail::grad_tensor_list(grads, model);
    const auto params = detail::lstm_tensors(model);

    GradCheckReport report;
    constexpr double kStep = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Eigen::MatrixXd& P = *params[k].second;
        const Eigen::MatrixXd& A = *gl[k];
        const long size = static_cast<long>(P.size());
        const long samples = std::min<long>(per_tensor, size);
        const long stride = std::max<long>(1, size / samples);
        double tensor_max = 0.0;
        for (long s = 0; s < samples; ++s) {
            const long idx = std::min(size - 1, s * stride);
            double* slot = P.data() + idx;
            const double keep = *slot;
            *slot = keep + kStep;
            const double lp = loss_at();
            *slot = keep - kStep;
            const double lm = loss_at();
            *slot = keep;
            const double numeric = (lp - lm) / (2.0 * kStep);
            const double analytic = A.data()[idx];
            const double denom = std::abs(analytic) + std::abs(numeric);
            if (denom < 1e-10) continue;
            tensor_max = std::max(tensor_max, std::abs(analytic - numeric) / denom);
        }
        report.per_tensor[params[k].first] = tensor_max;
        report.max_rel = std::max(report.max_rel, tensor_max);
    }
    return report;
}

inline void to_json(nlohmann::json& j, const LstmConfig& c) {
    j = nlohmann::json{{"depth", c.depth},
                       {"bidirectional", c.bidirectional},
                       {"units", c.units},
                       {"learning_rate", c.learning_rate},
                       {"dropout", c.dropout},
                       {"window", c.window},
                       {"epochs", c.epochs},
                       {"batch", c.batch},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LstmConfig& c) {
    j.at("depth").get_to(c.depth);
    j.at("bidirectional").get_to(c.bidirectional);
    j.at("units").get_to(c.units);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("dropout").get_to(c.dropout);
    j.at("window").get_to(c.window);
    j.at("epochs").get_to(c.epochs);
    j.at("batch").get_to(c.batch);
    j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const LstmModel& m) {
    j = nlohmann::json{{"config", m.config},
                       {"input_dim", m.input_dim},
                       {"loss_curve", m.loss_curve}};
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<std::pair<std::string, const Eigen::MatrixXd*>> list;
    detail::collect_lstm_tensors(m, list);
    for (const auto& [name, p] : list) {
        nlohmann::json t;
        t["name"] = name;
        t["rows"] = p->rows();
        t["cols"] = p->cols();
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(p->size()));
        for (int i = 0; i < p->rows(); ++i)
            for (int jj = 0; jj < p->cols(); ++jj) data.push_back((*p)(i, jj));
        t["data"] = std::move(data);
        tensors.push_back(std::move(t));
    }
    j["tensors"] = std::move(tensors);
}

inline void from_json(const nlohmann::json& j, LstmModel& m) {
    LstmConfig cfg = j.at("config").get<LstmConfig>();
    const int input_dim = j.at("input_dim").get<int>();
    m = detail::lstm_skeleton(cfg, input_dim);
    j.at("loss_curve").get_to(m.loss_curve);
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
    for (auto& [name, p] : detail::lstm_tensors(m)) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("lstm payload: missing tensor " + name);
        const nlohmann::json& t = *it->second;
        const long rows = t.at("rows").get<long>();
        const long cols = t.at("cols").get<long>();
        if (rows != p->rows() || cols != p->cols())
            throw DataError("lstm payload: shape mismatch for " + name);
        const auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<long>(data.size()) != rows * cols)
            throw DataError("lstm payload: data size mismatch for " + name);
        std::size_t at = 0;
        for (long i = 0; i < rows; ++i)
            for (long jj = 0; jj < cols; ++jj) (*p)(i, jj) = data[at++];
    }
}

/// Candidate ranges for random search. List-valued dimensions pick one entry;
/// units draws an integer in [units_min, units_max], learning_rate is
/// log-uniform, dropout uniform.
struct LstmSpace {
    std::vector<int> depth = {1, 2};
    std::vector<int> bidirectional = {0, 1};
    int units_min = 50;
    int units_max = 200;
    double lr_min = 1e-4;
    double lr_max = 1e-2;
    double dropout_min = 0.0;
    double dropout_max = 0.4;
    std::vector<int> window = {7};
    std::vector<int> epochs = {60};
    int batch = 7;
};

inline LstmConfig sample_lstm_config(const LstmSpace& s, Rng& rng) {
    if (s.depth.empty() || s.bidirectional.empty() || s.window.empty() || s.epochs.empty())
        throw UsageError("tune_lstm: empty candidate list in the search space");
    if (s.units_min < 1 || s.units_max < s.units_min || s.lr_min <= 0.0 || s.lr_max < s.lr_min ||
        s.dropout_min < 0.0 || s.dropout_max < s.dropout_min || s.dropout_max >= 1.0)
        throw UsageError("tune_lstm: invalid range in the search space");
    LstmConfig c;
    c.depth = s.depth[rng.uniform_int(s.depth.size())];
    c.bidirectional = s.bidirectional[rng.uniform_int(s.bidirectional.size())] != 0;
    c.units = s.units_min + static_cast<int>(rng.uniform_int(
                                static_cast<std::uint64_t>(s.units_max - s.units_min + 1)));
    c.learning_rate = rng.log_uniform(s.lr_min, s.lr_max);
    c.dropout = rng.uniform(s.dropout_min, s.dropout_max);
    c.window = s.window[rng.uniform_int(s.window.size())];
    c.epochs = s.epochs[rng.uniform_int(s.epochs.size())];
    c.batch = s.batch;
    return c;
}

struct LstmTrial {
    LstmConfig config;
    double score = 0.0;
    bool memoized = false;
};

struct LstmTuneResult {
    LstmConfig best;
    int best_index = -1;
    std::vector<LstmTrial> trials;

    std::string trace_csv() const {
        std::ostringstream out;
        out << "trial,depth,bidirectional,units,learning_rate,dropout,window,epochs,batch,score,"
               "memoized\n";
        for (std::size_t i = 0; i < trials.size(); ++i) {
            const LstmConfig& c = trials[i].config;
            out << i << ',' << c.depth << ',' << (c.bidirectional ? 1 : 0) << ',' << c.units << ','
                << csv::fmt_double(c.learning_rate) << ',' << csv::fmt_double(c.dropout) << ','
                << c.window << ',' << c.epochs << ',' << c.batch << ','
                << csv::fmt_double(trials[i].score) << ',' << (trials[i].memoized ? 1 : 0) << '\n';
        }
        return out.str();
    }
};

namespace detail {

/// Min-max bounds over the training prefix; a flat target widens to a unit
/// band around the constant so scaling stays invertible.
inline Scaler fit_target_scaler(const std::vector<double>& y, int train_end) {
    double lo = y[0], hi = y[0];
    for (int t = 0; t < train_end; ++t) {
        lo = std::min(lo, y[static_cast<std::size_t>(t)]);
        hi = std::max(hi, y[static_cast<std::size_t>(t)]);
    }
    if (!(hi > lo)) return Scaler{lo - 0.5, lo + 0.5};
    return Scaler{lo, hi};
}

}  // namespace detail

/// Seeded random search with memoization: a trial whose sampled config
/// matches an earlier one reuses that score instead of retraining. All
/// trials share one derived training seed so equal configs stay equal.
inline LstmTuneResult tune_lstm(const std::vector<std::vector<double>>& rows,
                                const std::vector<double>& y, const LstmSpace& space,
                                const std::vector<TimeSlice>& splits, int budget,
                                std::uint64_t seed) {
    if (budget < 1) throw UsageError("tune_lstm: budget must be >= 1");
    if (splits.empty()) throw UsageError("tune_lstm: no validation folds");
    for (const auto& s : splits)
        if (s.val_end > static_cast<int>(y.size()))
            throw UsageError("tune_lstm: fold extends past the data");

    const std::uint64_t train_seed = derive_seed(seed, "lstm-train");
    LstmTuneResult out;
    double best_score = std::numeric_limits<double>::infinity();
    for (int i = 0; i < budget; ++i) {
        Rng rng(derive_seed(seed, "lstm-trial", static_cast<std::uint64_t>(i)));
        LstmConfig cfg = sample_lstm_config(space, rng);
        cfg.seed = train_seed;

        double score = 0.0;
        bool memoized = false;
        for (const auto& t : out.trials)
            if (t.config == cfg) {
                score = t.score;
                memoized = true;
                break;
            }
        if (!memoized) {
            std::vector<double> fold_scores;
            for (const auto& s : splits) {
                const Scaler sc = detail::fit_target_scaler(y, s.train_end);
                const std::vector<std::vector<double>> rows_tr(rows.begin() + s.train_begin,
                                                               rows.begin() + s.train_end);
                std::vector<double> y_tr;
                y_tr.reserve(static_cast<std::size_t>(s.train_end - s.train_begin));
                for (int t = s.train_begin; t < s.train_end; ++t)
                    y_tr.push_back(sc.apply(y[static_cast<std::size_t>(t)]));
                const LstmModel m = fit_lstm(rows_tr, y_tr, cfg);
                const std::vector<double> scaled =
                    lstm_predict_range(m, rows, s.val_begin, s.val_end);
                const std::vector<double> pred = sc.invert(scaled);
                std::vector<double> y_val(y.begin() + s.val_begin, y.begin() + s.val_end);
                fold_scores.push_back(detail::safe_mape(y_val, pred));
            }
            score = stable_sum(std::move(fold_scores)) / static_cast<double>(splits.size());
        }
        out.trials.push_back({cfg, score, memoized});
        if (score < best_score) {
            best_score = score;
            out.best = cfg;
            out.best_index = i;
        }
    }
    return out;
}

}  // namespace evcast
