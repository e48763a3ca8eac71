#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fpaccel/common.hpp"
#include "fpaccel/io.hpp"
#include "fpaccel/tape.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

enum class Activation { relu, tanh, elu };
enum class CellKind { gru, lstm };

// What the initializer provides: nothing, only the hidden state, only the
// first iterate, or both.
enum class InitMode { none, hidden_only, iterate_only, both };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::elu: return "elu";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "elu") return Activation::elu;
    throw config_error("unknown activation: " + s);
}

inline const char* cell_kind_name(CellKind c) { return c == CellKind::gru ? "gru" : "lstm"; }

inline CellKind cell_kind_from_name(const std::string& s) {
    if (s == "gru") return CellKind::gru;
    if (s == "lstm") return CellKind::lstm;
    throw config_error("unknown recurrent cell: " + s);
}

inline const char* init_mode_name(InitMode m) {
    switch (m) {
        case InitMode::none: return "none";
        case InitMode::hidden_only: return "hidden";
        case InitMode::iterate_only: return "iterate";
        case InitMode::both: return "both";
    }
    return "?";
}

inline InitMode init_mode_from_name(const std::string& s) {
    if (s == "none") return InitMode::none;
    if (s == "hidden") return InitMode::hidden_only;
    if (s == "iterate") return InitMode::iterate_only;
    if (s == "both") return InitMode::both;
    throw config_error("unknown init mode: " + s);
}

struct ModelSpec {
    std::size_t context_dim = 0;
    std::size_t iterate_dim = 0;
    InitMode mode = InitMode::both;

    std::size_t init_hidden = 128, init_depth = 1;
    Activation init_act = Activation::relu;
    std::size_t enc_hidden = 128, enc_depth = 1;
    Activation enc_act = Activation::relu;
    std::size_t dec_hidden = 128, dec_depth = 1;
    Activation dec_act = Activation::relu;

    CellKind cell = CellKind::gru;
    std::size_t cell_hidden = 128;
    std::size_t cell_layers = 1;

    // decoder output divisor; the correction added to the plain iterate is
    // decoder(h) / weight_scale
    double weight_scale = 64.0;

    std::size_t state_dim() const {
        return cell_layers * cell_hidden * (cell == CellKind::lstm ? 2 : 1);
    }

    std::size_t init_out_dim() const {
        switch (mode) {
            case InitMode::none: return 0;
            case InitMode::hidden_only: return state_dim();
            case InitMode::iterate_only: return iterate_dim;
            case InitMode::both: return iterate_dim + state_dim();
        }
        return 0;
    }
};

// Parameters theta of the learned initializer g_init and accelerator g_acc.
// Tensors live in declaration order; checkpoints serialize them in the same
// order after a key-value architecture header.
class AccelModel {
public:
    AccelModel() = default;

    AccelModel(ModelSpec spec, std::uint64_t seed) : spec_(spec) {
        if (spec_.iterate_dim == 0) throw config_error("model: iterate_dim must be > 0");
        if (spec_.mode != InitMode::none && spec_.context_dim == 0)
            throw config_error("model: context_dim must be > 0 when the initializer is learned");
        Rng rng(seed);
        build(rng);
    }

    const ModelSpec& spec() const { return spec_; }
    std::size_t param_count() const { return params_.size(); }
    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    bool finite() const {
        for (const auto& p : params_)
            if (!p.finite()) return false;
        return true;
    }

    // Zeroes the decoder's final linear layer, making g_acc the identity
    // (x_{t+1} = x~_{t+1}) regardless of the other weights.
    void zero_decoder_output() {
        params_[dec_.back().w] = Tensor::zeros(params_[dec_.back().w].shape());
        params_[dec_.back().b] = Tensor::zeros(params_[dec_.back().b].shape());
    }

    // ---- raw forward (evaluation path, no tape) ----

    // [x1, h1] = g_init(phi); missing pieces come from the solver default.
    std::pair<Tensor, Tensor> init_apply(const Tensor& context, const Tensor& default_init) const {
        if (default_init.size() != spec_.iterate_dim)
            throw config_error("init_apply: default iterate dim mismatch");
        Tensor h = Tensor::zeros({spec_.state_dim()});
        if (spec_.mode == InitMode::none) return {default_init, h};
        if (context.size() != spec_.context_dim)
            throw config_error("init_apply: context dim mismatch");
        Tensor out = mlp_forward(init_, context, spec_.init_act);
        switch (spec_.mode) {
            case InitMode::hidden_only: return {default_init, out};
            case InitMode::iterate_only: return {out, h};
            case InitMode::both:
                return {slice(out, 0, spec_.iterate_dim),
                        slice(out, spec_.iterate_dim, spec_.state_dim())};
            default: return {default_init, h};
        }
    }

    // x_{t+1}, h_{t+1} = g_acc(x_t, x~_{t+1}, h_t); the decoder output is a
    // residual correction added to x~_{t+1}.
    std::pair<Tensor, Tensor> acc_apply(const Tensor& x, const Tensor& xt, const Tensor& h) const {
        if (x.size() != spec_.iterate_dim || xt.size() != spec_.iterate_dim)
            throw config_error("acc_apply: iterate dim mismatch");
        if (h.size() != spec_.state_dim()) throw config_error("acc_apply: hidden state dim mismatch");
        Tensor xi = mlp_forward(enc_, concat(x, xt), spec_.enc_act);
        Tensor hn({spec_.state_dim()});
        std::size_t per = spec_.cell_hidden * (spec_.cell == CellKind::lstm ? 2 : 1);
        Tensor input = xi;
        for (std::size_t l = 0; l < spec_.cell_layers; ++l) {
            Tensor hl = slice(h, l * per, per);
            Tensor ho = cell_forward(l, input, hl);
            std::copy(ho.data(), ho.data() + per, hn.data() + l * per);
            input = slice(ho, 0, spec_.cell_hidden);
        }
        Tensor delta = mlp_forward(dec_, input, spec_.dec_act);
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] /= spec_.weight_scale;
        Tensor xn = fpaccel::add(xt, delta);
        require_finite(xn, "acc_apply");
        return {xn, hn};
    }

    // ---- taped forward (training path) ----

    std::vector<VarRef> bind(Tape& tape) const {
        std::vector<VarRef> vars;
        vars.reserve(params_.size());
        for (const auto& p : params_) vars.push_back(tape.leaf(p));
        return vars;
    }

    std::pair<VarRef, VarRef> init_apply_taped(Tape& tape, const std::vector<VarRef>& vars,
                                               VarRef context, const Tensor& default_init) const {
        VarRef h = tape.leaf(Tensor::zeros({spec_.state_dim()}));
        if (spec_.mode == InitMode::none) return {tape.leaf(default_init), h};
        VarRef out = mlp_taped(tape, vars, init_, context, spec_.init_act);
        switch (spec_.mode) {
            case InitMode::hidden_only: return {tape.leaf(default_init), out};
            case InitMode::iterate_only: return {out, h};
            case InitMode::both:
                return {tape.slice(out, 0, spec_.iterate_dim),
                        tape.slice(out, spec_.iterate_dim, spec_.state_dim())};
            default: return {tape.leaf(default_init), h};
        }
    }

    std::pair<VarRef, VarRef> acc_apply_taped(Tape& tape, const std::vector<VarRef>& vars,
                                              VarRef x, VarRef xt, VarRef h) const {
        VarRef xi = mlp_taped(tape, vars, enc_, tape.concat(x, xt), spec_.enc_act);
        std::size_t per = spec_.cell_hidden * (spec_.cell == CellKind::lstm ? 2 : 1);
        std::vector<VarRef> states;
        VarRef input = xi;
        for (std::size_t l = 0; l < spec_.cell_layers; ++l) {
            VarRef hl = tape.slice(h, l * per, per);
            VarRef ho = cell_taped(tape, vars, l, input, hl);
            states.push_back(ho);
            input = tape.slice(ho, 0, spec_.cell_hidden);
        }
        VarRef hn = states[0];
        for (std::size_t l = 1; l < states.size(); ++l) hn = tape.concat(hn, states[l]);
        VarRef delta = tape.div_const(mlp_taped(tape, vars, dec_, input, spec_.dec_act),
                                      spec_.weight_scale);
        return {tape.add(xt, delta), hn};
    }

    // ---- checkpoints ----

    void save(const std::string& path, const std::string& family = "") const {
        Bundle b;
        b.set_meta("format", std::string("fpaccel-checkpoint"));
        if (!family.empty()) b.set_meta("family", family);
        b.set_meta("context_dim", spec_.context_dim);
        b.set_meta("iterate_dim", spec_.iterate_dim);
        b.set_meta("init_mode", std::string(init_mode_name(spec_.mode)));
        b.set_meta("init_hidden", spec_.init_hidden);
        b.set_meta("init_depth", spec_.init_depth);
        b.set_meta("init_act", std::string(activation_name(spec_.init_act)));
        b.set_meta("enc_hidden", spec_.enc_hidden);
        b.set_meta("enc_depth", spec_.enc_depth);
        b.set_meta("enc_act", std::string(activation_name(spec_.enc_act)));
        b.set_meta("dec_hidden", spec_.dec_hidden);
        b.set_meta("dec_depth", spec_.dec_depth);
        b.set_meta("dec_act", std::string(activation_name(spec_.dec_act)));
        b.set_meta("cell", std::string(cell_kind_name(spec_.cell)));
        b.set_meta("cell_hidden", spec_.cell_hidden);
        b.set_meta("cell_layers", spec_.cell_layers);
        b.set_meta("weight_scale", spec_.weight_scale);
        for (std::size_t i = 0; i < params_.size(); ++i) b.add(names_[i], params_[i]);
        b.write(path);
    }

    static AccelModel load(const std::string& path) {
        Bundle b = Bundle::read(path);
        if (!b.has_meta("format") || b.meta("format") != "fpaccel-checkpoint")
            throw config_error("checkpoint '" + path + "' has the wrong format tag");
        ModelSpec s;
        s.context_dim = b.meta_size("context_dim");
        s.iterate_dim = b.meta_size("iterate_dim");
        s.mode = init_mode_from_name(b.meta("init_mode"));
        s.init_hidden = b.meta_size("init_hidden");
        s.init_depth = b.meta_size("init_depth");
        s.init_act = activation_from_name(b.meta("init_act"));
        s.enc_hidden = b.meta_size("enc_hidden");
        s.enc_depth = b.meta_size("enc_depth");
        s.enc_act = activation_from_name(b.meta("enc_act"));
        s.dec_hidden = b.meta_size("dec_hidden");
        s.dec_depth = b.meta_size("dec_depth");
        s.dec_act = activation_from_name(b.meta("dec_act"));
        s.cell = cell_kind_from_name(b.meta("cell"));
        s.cell_hidden = b.meta_size("cell_hidden");
        s.cell_layers = b.meta_size("cell_layers");
        s.weight_scale = b.meta_double("weight_scale");
        AccelModel m(s, 0);
        for (std::size_t i = 0; i < m.params_.size(); ++i) {
            const Tensor& t = b.get(m.names_[i]);
            if (!t.same_shape(m.params_[i]))
                throw config_error("checkpoint '" + path + "': shape mismatch for " + m.names_[i]);
            m.params_[i] = t;
        }
        return m;
    }

    static std::string family_of(const std::string& path) {
        Bundle b = Bundle::read(path);
        return b.has_meta("family") ? b.meta("family") : "";
    }

private:
    struct Linear {
        std::size_t w = 0;
        std::size_t b = 0;
    };
    struct CellParams {
        // gru: r, z, n gates; lstm: i, f, g, o gates
        std::vector<std::size_t> wx;  // input weights
        std::vector<std::size_t> wh;  // hidden weights
        std::vector<std::size_t> bias;
    };

    std::size_t add_param(const std::string& name, Tensor t) {
        names_.push_back(name);
        params_.push_back(std::move(t));
        return params_.size() - 1;
    }

    Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double std_dev) {
        Tensor t({rows, cols});
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = std_dev * rng.normal();
        return t;
    }

    std::vector<Linear> build_mlp(const std::string& prefix, std::size_t in, std::size_t hidden,
                                  std::size_t depth, std::size_t out, Activation act, Rng& rng) {
        std::vector<Linear> layers;
        std::size_t cur = in;
        for (std::size_t l = 0; l <= depth; ++l) {
            std::size_t next = (l == depth) ? out : hidden;
            double std_dev = std::sqrt((act == Activation::tanh ? 1.0 : 2.0) /
                                       static_cast<double>(cur));
            Linear lin;
            lin.w = add_param(prefix + "." + std::to_string(l) + ".W",
                              gaussian(rng, next, cur, std_dev));
            lin.b = add_param(prefix + "." + std::to_string(l) + ".b", Tensor::zeros({next}));
            layers.push_back(lin);
            cur = next;
        }
        return layers;
    }

    void build(Rng& rng) {
        if (spec_.mode != InitMode::none)
            init_ = build_mlp("init", spec_.context_dim, spec_.init_hidden, spec_.init_depth,
                              spec_.init_out_dim(), spec_.init_act, rng);
        enc_ = build_mlp("enc", 2 * spec_.iterate_dim, spec_.enc_hidden, spec_.enc_depth,
                         spec_.cell_hidden, spec_.enc_act, rng);
        std::size_t gates = spec_.cell == CellKind::lstm ? 4 : 3;
        static const char* gru_names[] = {"r", "z", "n"};
        static const char* lstm_names[] = {"i", "f", "g", "o"};
        for (std::size_t l = 0; l < spec_.cell_layers; ++l) {
            CellParams cp;
            double std_x = std::sqrt(1.0 / static_cast<double>(spec_.cell_hidden));
            for (std::size_t gi = 0; gi < gates; ++gi) {
                const char* gn =
                    spec_.cell == CellKind::lstm ? lstm_names[gi] : gru_names[gi];
                std::string base = "cell." + std::to_string(l) + "." + gn;
                cp.wx.push_back(add_param(
                    base + ".Wx", gaussian(rng, spec_.cell_hidden, spec_.cell_hidden, std_x)));
                cp.wh.push_back(add_param(
                    base + ".Wh", gaussian(rng, spec_.cell_hidden, spec_.cell_hidden, std_x)));
                cp.bias.push_back(add_param(base + ".b", Tensor::zeros({spec_.cell_hidden})));
            }
            cells_.push_back(cp);
        }
        dec_ = build_mlp("dec", spec_.cell_hidden, spec_.dec_hidden, spec_.dec_depth,
                         spec_.iterate_dim, spec_.dec_act, rng);
    }

    static Tensor activate(const Tensor& x, Activation act) {
        Tensor v = x;
        switch (act) {
            case Activation::relu:
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
                break;
            case Activation::elu:
                for (std::size_t i = 0; i < v.size(); ++i)
                    v[i] = v[i] > 0.0 ? v[i] : std::expm1(v[i]);
                break;
        }
        return v;
    }

    Tensor mlp_forward(const std::vector<Linear>& layers, const Tensor& x, Activation act) const {
        Tensor cur = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            cur = fpaccel::add(fpaccel::matvec(params_[layers[l].w], cur), params_[layers[l].b]);
            if (l + 1 < layers.size()) cur = activate(cur, act);
        }
        return cur;
    }

    VarRef mlp_taped(Tape& tape, const std::vector<VarRef>& vars, const std::vector<Linear>& layers,
                     VarRef x, Activation act) const {
        VarRef cur = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            cur = tape.add(tape.matvec(vars[layers[l].w], cur), vars[layers[l].b]);
            if (l + 1 < layers.size()) {
                switch (act) {
                    case Activation::relu: cur = tape.relu(cur); break;
                    case Activation::tanh: cur = tape.tanh(cur); break;
                    case Activation::elu: cur = tape.elu(cur); break;
                }
            }
        }
        return cur;
    }

    static Tensor sigmoid_raw(const Tensor& x) {
        Tensor v = x;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
        return v;
    }

    static Tensor tanh_raw(const Tensor& x) {
        Tensor v = x;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
        return v;
    }

    // one recurrent layer; state is h (gru) or [h; c] (lstm)
    Tensor cell_forward(std::size_t layer, const Tensor& x, const Tensor& state) const {
        const CellParams& cp = cells_[layer];
        auto gate = [&](std::size_t gi, const Tensor& h) {
            return fpaccel::add(
                fpaccel::add(fpaccel::matvec(params_[cp.wx[gi]], x),
                             fpaccel::matvec(params_[cp.wh[gi]], h)),
                params_[cp.bias[gi]]);
        };
        if (spec_.cell == CellKind::gru) {
            const Tensor& h = state;
            Tensor r = sigmoid_raw(gate(0, h));
            Tensor z = sigmoid_raw(gate(1, h));
            Tensor pre = fpaccel::add(
                fpaccel::add(fpaccel::matvec(params_[cp.wx[2]], x),
                             fpaccel::mul(r, fpaccel::matvec(params_[cp.wh[2]], h))),
                params_[cp.bias[2]]);
            Tensor n = tanh_raw(pre);
            // h' = n + z (h - n)
            return fpaccel::add(n, fpaccel::mul(z, fpaccel::sub(h, n)));
        }
        Tensor h = slice(state, 0, spec_.cell_hidden);
        Tensor c = slice(state, spec_.cell_hidden, spec_.cell_hidden);
        Tensor ig = sigmoid_raw(gate(0, h));
        Tensor fg = sigmoid_raw(gate(1, h));
        Tensor gg = tanh_raw(gate(2, h));
        Tensor og = sigmoid_raw(gate(3, h));
        Tensor cn = fpaccel::add(fpaccel::mul(fg, c), fpaccel::mul(ig, gg));
        Tensor hn = fpaccel::mul(og, tanh_raw(cn));
        return concat(hn, cn);
    }

    VarRef cell_taped(Tape& tape, const std::vector<VarRef>& vars, std::size_t layer, VarRef x,
                      VarRef state) const {
        const CellParams& cp = cells_[layer];
        auto gate = [&](std::size_t gi, VarRef h) {
            return tape.add(tape.add(tape.matvec(vars[cp.wx[gi]], x),
                                     tape.matvec(vars[cp.wh[gi]], h)),
                            vars[cp.bias[gi]]);
        };
        if (spec_.cell == CellKind::gru) {
            VarRef h = state;
            VarRef r = tape.sigmoid(gate(0, h));
            VarRef z = tape.sigmoid(gate(1, h));
            VarRef pre = tape.add(tape.add(tape.matvec(vars[cp.wx[2]], x),
                                           tape.mul(r, tape.matvec(vars[cp.wh[2]], h))),
                                  vars[cp.bias[2]]);
            VarRef n = tape.tanh(pre);
            return tape.add(n, tape.mul(z, tape.sub(h, n)));
        }
        VarRef h = tape.slice(state, 0, spec_.cell_hidden);
        VarRef c = tape.slice(state, spec_.cell_hidden, spec_.cell_hidden);
        VarRef ig = tape.sigmoid(gate(0, h));
        VarRef fg = tape.sigmoid(gate(1, h));
        VarRef gg = tape.tanh(gate(2, h));
        VarRef og = tape.sigmoid(gate(3, h));
        VarRef cn = tape.add(tape.mul(fg, c), tape.mul(ig, gg));
        VarRef hn = tape.mul(og, tape.tanh(cn));
        return tape.concat(hn, cn);
    }

    ModelSpec spec_;
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
    std::vector<Linear> init_;
    std::vector<Linear> enc_;
    std::vector<CellParams> cells_;
    std::vector<Linear> dec_;
};

}  // namespace fpaccel
