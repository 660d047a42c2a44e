#include "murrenet/fusion.hpp"

#include <cmath>

namespace murre {

MsaBlock::MsaBlock(ParamSet& ps, const std::string& name, int d, int n_heads_, Rng& rng)
    : q(ps, name + ".q", d, d, rng),
      k(ps, name + ".k", d, d, rng),
      v(ps, name + ".v", d, d, rng),
      o(ps, name + ".o", d, d, rng),
      n_heads(n_heads_) {
    if (d % n_heads != 0) throw std::invalid_argument("MsaBlock '" + name + "': d must be divisible by n_heads");
}

PpegBlock::PpegBlock(ParamSet& ps, const std::string& name, int d) {
    k3 = &ps.add(name + ".k3", 9, d);
    k5 = &ps.add(name + ".k5", 25, d);
    k7 = &ps.add(name + ".k7", 49, d);
}

DecoderParams::DecoderParams(ParamSet& ps, const std::string& name, int d, int n_heads, Rng& rng)
    : ln1(ps, name + ".ln1", d),
      ln2(ps, name + ".ln2", d),
      msa1(ps, name + ".msa1", d, n_heads, rng),
      msa2(ps, name + ".msa2", d, n_heads, rng),
      ppeg(ps, name + ".ppeg", d) {
    class_token = &ps.add(name + ".class_token", 1, d);
    for (double& x : class_token->value.a) x = 0.02 * rng.normal();
}

FusionParams::FusionParams(ParamSet& ps, int d, int n_bins, int n_heads, int n_landmarks_, int pinv_iters_,
                           bool pool_includes_common_, Rng& rng)
    : decoder_s(ps, "fusion.decoder_s", d, n_heads, rng),
      decoder_c(ps, "fusion.decoder_c", d, n_heads, rng),
      fuse_fc(ps, "fusion.fuse_fc", d, d, rng),
      final_fc(ps, "fusion.final_fc", d, n_bins, rng),
      n_landmarks(n_landmarks_),
      pinv_iters(pinv_iters_),
      pool_includes_common(pool_includes_common_) {
    w_q = &ps.add("fusion.w_q", d, d);
    w_k = &ps.add("fusion.w_k", d, d);
    w_v = &ps.add("fusion.w_v", d, d);
    init_fan_in(w_q->value, d, rng);
    init_fan_in(w_k->value, d, rng);
    init_fan_in(w_v->value, d, rng);
}

std::pair<Tape::Var, Tape::Var> concat_streams(Tape& t, Tape::Var h_p_s, Tape::Var h_g_s, Tape::Var h_p_c,
                                               Tape::Var h_g_c) {
    return {t.concat_rows(h_p_s, h_g_s), t.concat_rows(h_p_c, h_g_c)};
}

Tape::Var cross_attention(Tape& t, Tape::Var query_tokens, Tape::Var kv_tokens, const FusionParams& params) {
    if (t.val(kv_tokens).rows < 1) throw std::invalid_argument("cross_attention: empty key set");
    const int d = t.val(query_tokens).cols;
    Tape::Var q = t.matmul_nt(query_tokens, t.param(*params.w_q));
    Tape::Var k = t.matmul_nt(kv_tokens, t.param(*params.w_k));
    Tape::Var v = t.matmul_nt(kv_tokens, t.param(*params.w_v));
    Tape::Var scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    return t.matmul(t.softmax_rows(scores), v);
}

namespace {

Tape::Var attention_exact(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, double scale) {
    Tape::Var s = t.softmax_rows(t.scale(t.matmul_nt(q, k), scale));
    return t.matmul(s, v);
}

// Newton-Schulz iteration for the Moore-Penrose pseudo-inverse; the init
// scaling 1/(max colsum * max rowsum) follows the usual recipe for softmax
// attention matrices.
Tape::Var pinv_newton(Tape& t, Tape::Var a, int iters) {
    const int m = t.val(a).rows;
    Tape::Var eye = t.identity(m);
    Tape::Var denom = t.hadamard(t.max_colsum(a), t.max_rowsum(a));
    Tape::Var z = t.div_by_scalar(t.transpose(a), denom, 0.0);
    for (int it = 0; it < iters; ++it) {
        Tape::Var az = t.matmul(a, z);
        Tape::Var inner = t.sub(t.scale(eye, 7.0), az);
        inner = t.sub(t.scale(eye, 15.0), t.matmul(az, inner));
        inner = t.sub(t.scale(eye, 13.0), t.matmul(az, inner));
        z = t.scale(t.matmul(z, inner), 0.25);
    }
    return z;
}

Tape::Var attention_nystrom(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, double scale, int n_landmarks,
                            int pinv_iters) {
    Tape::Var qm = t.segment_mean_rows(q, n_landmarks);
    Tape::Var km = t.segment_mean_rows(k, n_landmarks);
    Tape::Var f = t.softmax_rows(t.scale(t.matmul_nt(q, km), scale));
    Tape::Var a = t.softmax_rows(t.scale(t.matmul_nt(qm, km), scale));
    Tape::Var b = t.softmax_rows(t.scale(t.matmul_nt(qm, k), scale));
    Tape::Var z = pinv_newton(t, a, pinv_iters);
    return t.matmul(f, t.matmul(z, t.matmul(b, v)));
}

}  // namespace

Tape::Var multi_head_self_attention(Tape& t, Tape::Var x, const MsaBlock& mb, int n_landmarks, int pinv_iters,
                                    AttnMode mode) {
    const int n = t.val(x).rows;
    const int d = t.val(x).cols;
    const int dh = d / mb.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool nystrom = mode == AttnMode::Nystrom || (mode == AttnMode::Auto && n > 2 * n_landmarks);
    Tape::Var q = mb.q.apply(t, x);
    Tape::Var k = mb.k.apply(t, x);
    Tape::Var v = mb.v.apply(t, x);
    Tape::Var heads{};
    for (int h = 0; h < mb.n_heads; ++h) {
        Tape::Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Tape::Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
        Tape::Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
        Tape::Var oh = nystrom ? attention_nystrom(t, qh, kh, vh, scale, n_landmarks, pinv_iters)
                               : attention_exact(t, qh, kh, vh, scale);
        heads = h == 0 ? oh : t.concat_cols(heads, oh);
    }
    return mb.o.apply(t, heads);
}

Tape::Var ppeg(Tape& t, Tape::Var tokens_without_class, const PpegBlock& pb) {
    const int n = t.val(tokens_without_class).rows;
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int m = side * side;
    Tape::Var grid = m > n ? t.pad_repeat_rows(tokens_without_class, m) : tokens_without_class;
    Tape::Var y = t.add(grid, t.depthwise_conv_grid(grid, t.param(*pb.k3), side, 3));
    y = t.add(y, t.depthwise_conv_grid(grid, t.param(*pb.k5), side, 5));
    y = t.add(y, t.depthwise_conv_grid(grid, t.param(*pb.k7), side, 7));
    return m > n ? t.slice_rows(y, 0, n) : y;
}

Tape::Var transformer_decoder(Tape& t, Tape::Var tokens, const DecoderParams& dp, int n_landmarks, int pinv_iters,
                              AttnMode mode) {
    Tape::Var x = t.concat_rows(t.param(*dp.class_token), tokens);
    const int n1 = t.val(x).rows;
    Tape::Var f1 = t.add(multi_head_self_attention(t, dp.ln1.apply(t, x), dp.msa1, n_landmarks, pinv_iters, mode), x);
    // Class token stays out of the positional convolution.
    Tape::Var cls = t.slice_rows(f1, 0, 1);
    Tape::Var content = t.slice_rows(f1, 1, n1);
    Tape::Var f2 = t.concat_rows(cls, ppeg(t, content, dp.ppeg));
    return t.add(multi_head_self_attention(t, dp.ln2.apply(t, f2), dp.msa2, n_landmarks, pinv_iters, mode), f2);
}

Tape::Var orthogonal_decompose(Tape& t, Tape::Var f_s_tokens, Tape::Var f_c_vec, double denom_eps) {
    const Mat& c = t.val(f_c_vec);
    if (c.rows != 1) throw ShapeError("orthogonal_decompose: f_c must be 1xd, got " + shape_str(c));
    Tape::Var coef = t.div_by_scalar(t.matmul_nt(f_s_tokens, f_c_vec), t.matmul_nt(f_c_vec, f_c_vec), denom_eps);
    return t.sub(f_s_tokens, t.matmul(coef, f_c_vec));
}

std::pair<Tape::Var, Tape::Var> dhof_fuse(Tape& t, Tape::Var f_s, Tape::Var f_c, const FusionParams& params) {
    const int n = t.val(f_s).rows;
    Tape::Var f_c_vec = t.slice_rows(f_c, 0, 1);
    Tape::Var content = t.slice_rows(f_s, 1, n);
    Tape::Var orth = orthogonal_decompose(t, content, f_c_vec, 1e-8);
    Tape::Var pooled = t.mean_rows(params.pool_includes_common ? t.concat_rows(f_c_vec, orth) : orth);
    return {params.fuse_fc.apply(t, pooled), orth};
}

Mat cross_attention(const Mat& query_tokens, const Mat& kv_tokens, const FusionParams& params) {
    Tape t;
    return t.val(cross_attention(t, t.input(query_tokens), t.input(kv_tokens), params));
}

Mat transformer_decoder(const Mat& tokens, const DecoderParams& dp, int n_landmarks, int pinv_iters, AttnMode mode) {
    Tape t;
    return t.val(transformer_decoder(t, t.input(tokens), dp, n_landmarks, pinv_iters, mode));
}

Mat ppeg(const Mat& tokens_without_class, const PpegBlock& pb) {
    Tape t;
    return t.val(ppeg(t, t.input(tokens_without_class), pb));
}

Mat orthogonal_decompose(const Mat& f_s_tokens, const Mat& f_c_vec) {
    if (f_c_vec.rows != 1 || f_c_vec.cols != f_s_tokens.cols)
        throw ShapeError("orthogonal_decompose: f_c " + shape_str(f_c_vec) + " vs tokens " + shape_str(f_s_tokens));
    double norm2 = 0.0;
    for (double x : f_c_vec.a) norm2 += x * x;
    if (std::sqrt(norm2) <= 1e-8) throw std::domain_error("orthogonal_decompose: degenerate common representation");
    Mat out(f_s_tokens.rows, f_s_tokens.cols);
    for (int i = 0; i < f_s_tokens.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < f_s_tokens.cols; ++j) dot += f_s_tokens(i, j) * f_c_vec(0, j);
        const double coef = dot / norm2;
        for (int j = 0; j < f_s_tokens.cols; ++j) out(i, j) = f_s_tokens(i, j) - coef * f_c_vec(0, j);
    }
    return out;
}

}  // namespace murre
