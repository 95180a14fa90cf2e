#include "tabitd/explain.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tabitd/errors.hpp"

namespace tabitd::explain {

std::vector<double> step_importance(const Tensor2& d_i) {
    std::vector<double> eta(d_i.rows, 0.0);
    for (std::size_t r = 0; r < d_i.rows; ++r)
        for (std::size_t c = 0; c < d_i.cols; ++c) eta[r] += std::max(d_i.at(r, c), 0.0);
    return eta;
}

Tensor2 aggregate_mask(const std::vector<Tensor2>& masks, const Tensor2& etas,
                       std::vector<char>* degenerate) {
    if (masks.empty()) throw DimensionError("aggregate_mask: no step masks");
    const std::size_t b = masks.front().rows;
    const std::size_t d = masks.front().cols;
    for (const auto& m : masks)
        if (m.rows != b || m.cols != d)
            throw DimensionError("aggregate_mask: step masks disagree in shape");
    if (etas.rows != b || etas.cols != masks.size())
        throw DimensionError("aggregate_mask: eta matrix is " + etas.shape_str() +
                             ", expected " + std::to_string(b) + "x" +
                             std::to_string(masks.size()));

    Tensor2 out(b, d);
    if (degenerate) degenerate->assign(b, 0);
    for (std::size_t r = 0; r < b; ++r) {
        double denom = 0.0;
        for (std::size_t i = 0; i < masks.size(); ++i) {
            double w = etas.at(r, i);
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                double v = w * masks[i].at(r, j);
                out.at(r, j) += v;
                denom += v;
            }
        }
        if (denom > 0.0) {
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) /= denom;
        } else {
            for (std::size_t j = 0; j < d; ++j) out.at(r, j) = 0.0;
            if (degenerate) (*degenerate)[r] = 1;
        }
    }
    return out;
}

ImportanceReport explain(const encoder::TabnetModel& model, const Tensor2& batch,
                         std::size_t k) {
    if (batch.rows == 0) throw DimensionError("explain: empty batch");
    if (k == 0 || k > batch.cols)
        throw UsageError("top-k must be between 1 and the feature count (" +
                         std::to_string(batch.cols) + "), got " + std::to_string(k));

    auto out = model.forward_infer(batch);

    ImportanceReport rep;
    rep.per_step_eta = Tensor2(batch.rows, out.steps.size());
    std::vector<Tensor2> masks;
    masks.reserve(out.steps.size());
    for (std::size_t i = 0; i < out.steps.size(); ++i) {
        auto eta = step_importance(out.steps[i].d);
        for (std::size_t r = 0; r < batch.rows; ++r) rep.per_step_eta.at(r, i) = eta[r];
        masks.push_back(out.steps[i].mask);
    }
    rep.m_agg = aggregate_mask(masks, rep.per_step_eta, &rep.degenerate);
    rep.degenerate_count = static_cast<std::size_t>(
        std::count(rep.degenerate.begin(), rep.degenerate.end(), char(1)));

    rep.global_importance.assign(batch.cols, 0.0);
    for (std::size_t r = 0; r < batch.rows; ++r)
        for (std::size_t j = 0; j < batch.cols; ++j)
            rep.global_importance[j] += rep.m_agg.at(r, j);
    for (double& v : rep.global_importance) v /= static_cast<double>(batch.rows);

    rep.top_features.resize(batch.rows);
    std::vector<std::size_t> idx(batch.cols);
    for (std::size_t r = 0; r < batch.rows; ++r) {
        std::iota(idx.begin(), idx.end(), 0);
        auto row = rep.m_agg.row(r);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b2) {
            if (row[a] != row[b2]) return row[a] > row[b2];
            return a < b2;
        });
        rep.top_features[r].reserve(k);
        for (std::size_t i = 0; i < k; ++i) rep.top_features[r].emplace_back(idx[i], row[idx[i]]);
    }
    return rep;
}

} // namespace tabitd::explain
