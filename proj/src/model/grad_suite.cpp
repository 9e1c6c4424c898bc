#include "ftcn/model/grad_suite.hpp"

#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "ftcn/model/transformer.hpp"
#include "ftcn/tensor/gradcheck.hpp"

namespace ftcn::model {

namespace {

using Inputs = std::map<std::string, TensorD>;
using Leaves = std::map<std::string, Var>;

struct Draw {
  std::mt19937_64 rng;

  int dim(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

  TensorD tensor(Shape shape, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    TensorD t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
  }
};

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

// A fixed random projection gives every output entry its own weight in the loss.
Var project(Tape<double>& tape, Var y, Draw& draw) {
  return nn::dot(tape, y, draw.tensor(tape.value(y).shape()));
}

struct Case {
  Inputs inputs;
  std::string main;
  LossBuilder loss;
};

Case make_case(const std::string& op, Draw& d) {
  if (op == "conv3d") {
    const int c = d.dim(1, 3), co = d.dim(1, 3);
    const Dims3 k{d.dim(1, 3), d.dim(1, 3), d.dim(1, 3)};
    const Dims3 s{d.dim(1, 2), d.dim(1, 2), d.dim(1, 2)};
    Inputs in{{"x", d.tensor({d.dim(1, 2), c, d.dim(2, 4), d.dim(2, 4), d.dim(2, 4)})},
              {"w", d.tensor({co, c, k.t, k.h, k.w})},
              {"b", d.tensor({co})}};
    const std::uint64_t proj_seed = d.rng();
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              Draw p{std::mt19937_64(proj_seed)};
              return project(t, nn::conv3d(t, v.at("x"), v.at("w"), v.at("b"), s, same_padding(k)), p);
            }};
  }
  if (op == "linear") {
    const int in_dim = d.dim(1, 6), out_dim = d.dim(1, 6);
    Inputs in{{"x", d.tensor({d.dim(1, 3), d.dim(1, 3), in_dim})},
              {"w", d.tensor({out_dim, in_dim})},
              {"b", d.tensor({out_dim})}};
    const TensorD proj = d.tensor({in.at("x").dim(0), in.at("x").dim(1), out_dim});
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              return nn::dot(t, nn::linear(t, v.at("x"), v.at("w"), v.at("b")), proj);
            }};
  }
  if (op == "normalize_batch") {
    const int c = d.dim(1, 3);
    Inputs in{{"x", d.tensor({d.dim(2, 3), c, d.dim(1, 3), d.dim(1, 3), d.dim(1, 3)})},
              {"g", d.tensor({c}, 0.5, 1.5)},
              {"s", d.tensor({c})}};
    const TensorD proj = d.tensor(in.at("x").shape());
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              const Var y = nn::normalize<double>(t, v.at("x"), NormKind::batch_per_channel, v.at("g"), v.at("s"),
                                                  Mode::train, nullptr);
              return nn::dot(t, y, proj);
            }};
  }
  if (op == "normalize_layer") {
    const int dim = d.dim(2, 8);
    Inputs in{{"x", d.tensor({d.dim(1, 4), dim})}, {"g", d.tensor({dim}, 0.5, 1.5)}, {"s", d.tensor({dim})}};
    const TensorD proj = d.tensor(in.at("x").shape());
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              const Var y = nn::normalize<double>(t, v.at("x"), NormKind::layer_last_axis, v.at("g"), v.at("s"),
                                                  Mode::train, nullptr);
              return nn::dot(t, y, proj);
            }};
  }
  if (op == "gelu") {
    Inputs in{{"x", d.tensor({d.dim(1, 3), d.dim(2, 6)}, -3, 3)}};
    const TensorD proj = d.tensor(in.at("x").shape());
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              return nn::dot(t, nn::activation(t, v.at("x"), Activation::gelu), proj);
            }};
  }
  if (op == "softmax") {
    Inputs in{{"x", d.tensor({d.dim(1, 3), d.dim(2, 4), d.dim(2, 5)}, -2, 2)}};
    const int axis = d.dim(0, 2);
    const TensorD proj = d.tensor(in.at("x").shape());
    return {in, "x", [=](Tape<double>& t, const Leaves& v) {
              return nn::dot(t, nn::softmax(t, v.at("x"), axis), proj);
            }};
  }
  if (op == "multi_head_attention") {
    const int heads = d.dim(1, 3), head_dim = d.dim(1, 3), dim = d.dim(2, 5), tokens = d.dim(1, 5);
    const int inner = heads * head_dim;
    Inputs in{{"tok", d.tensor({tokens, dim})}};
    for (const char* n : {"qw", "kw", "vw"}) in[n] = d.tensor({inner, dim});
    in["qb"] = d.tensor({inner});
    in["vb"] = d.tensor({inner});
    in["ow"] = d.tensor({dim, inner});
    in["ob"] = d.tensor({dim});
    const TensorD proj = d.tensor({tokens, dim});
    return {in, "tok", [=](Tape<double>& t, const Leaves& v) {
              const nn::AttentionVars a{v.at("qw"), v.at("qb"), v.at("kw"), std::nullopt,
                                        v.at("vw"), v.at("vb"), v.at("ow"), v.at("ob")};
              return nn::dot(t, nn::multi_head_attention(t, v.at("tok"), heads, head_dim, a), proj);
            }};
  }
  if (op == "encoder_block") {
    const int heads = d.dim(1, 3), head_dim = d.dim(2, 4), dim = d.dim(4, 10), tokens = d.dim(2, 17);
    const int inner = heads * head_dim, mlp = 2 * dim;
    Inputs in{{"z", d.tensor({tokens, dim})}};
    in["g1"] = d.tensor({dim}, 0.5, 1.5);
    in["s1"] = d.tensor({dim}, -0.5, 0.5);
    for (const char* n : {"qw", "kw", "vw"}) in[n] = d.tensor({inner, dim}, -0.5, 0.5);
    in["qb"] = d.tensor({inner}, -0.5, 0.5);
    in["vb"] = d.tensor({inner}, -0.5, 0.5);
    in["ow"] = d.tensor({dim, inner}, -0.5, 0.5);
    in["ob"] = d.tensor({dim}, -0.5, 0.5);
    in["g2"] = d.tensor({dim}, 0.5, 1.5);
    in["s2"] = d.tensor({dim}, -0.5, 0.5);
    in["w1"] = d.tensor({mlp, dim}, -0.5, 0.5);
    in["b1"] = d.tensor({mlp}, -0.5, 0.5);
    in["w2"] = d.tensor({dim, mlp}, -0.5, 0.5);
    in["b2"] = d.tensor({dim}, -0.5, 0.5);
    const TensorD proj = d.tensor({tokens, dim});
    return {in, "z", [=](Tape<double>& t, const Leaves& v) {
              const EncoderVars e{v.at("g1"), v.at("s1"),
                                  {v.at("qw"), v.at("qb"), v.at("kw"), std::nullopt, v.at("vw"), v.at("vb"),
                                   v.at("ow"), v.at("ob")},
                                  v.at("g2"), v.at("s2"), v.at("w1"), v.at("b1"), v.at("w2"), v.at("b2")};
              return nn::dot(t, encoder_block(t, v.at("z"), e, heads, head_dim), proj);
            }};
  }
  if (op == "bce_loss") {
    const int n = d.dim(1, 8);
    Inputs in{{"z", d.tensor({n}, -4, 4)}};
    std::vector<double> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<double>(d.dim(0, 1)));
    return {in, "z", [=](Tape<double>& t, const Leaves& v) { return nn::bce_with_logits(t, v.at("z"), labels); }};
  }
  throw Error("unknown gradient-suite op '" + op + "'");
}

}  // namespace

const std::vector<std::string>& gradient_suite_ops() {
  static const std::vector<std::string> ops{"conv3d",  "linear",  "normalize_batch",      "normalize_layer",
                                            "gelu",    "softmax", "multi_head_attention", "encoder_block",
                                            "bce_loss"};
  return ops;
}

std::vector<GradSuiteRow> gradient_suite(const GradSuiteOptions& options) {
  if (options.trials < 1) throw Error("gradient suite needs at least one trial");
  std::vector<GradSuiteRow> rows;
  for (std::size_t o = 0; o < gradient_suite_ops().size(); ++o) {
    const std::string& op = gradient_suite_ops()[o];
    for (int trial = 0; trial < options.trials; ++trial) {
      Draw draw{std::mt19937_64(options.seed * 1000003 + o * 101 + static_cast<std::uint64_t>(trial))};
      const Case c = make_case(op, draw);
      const GradCheckReport r =
          finite_diff_check(c.inputs, c.loss,
                            {.step = options.step,
                             .tolerance = options.tolerance,
                             .max_entries = options.max_entries,
                             .seed = options.seed + static_cast<std::uint64_t>(trial)});
      std::int64_t probed = 0;
      for (const auto& e : r.entries) probed += e.probed;
      rows.push_back({op, trial, shape_text(c.inputs.at(c.main).shape()), r.max_rel_error(), probed, r.passed()});
    }
  }
  return rows;
}

std::string gradient_suite_csv(const std::vector<GradSuiteRow>& rows) {
  std::ostringstream os;
  os << "op,trial,shape,max_rel_error,probed,passed\n";
  for (const auto& r : rows) {
    os << r.op << "," << r.trial << "," << r.shape << "," << std::scientific << std::setprecision(3)
       << r.max_rel_error << "," << r.probed << "," << (r.passed ? "yes" : "no") << "\n";
  }
  return os.str();
}

}  // namespace ftcn::model
