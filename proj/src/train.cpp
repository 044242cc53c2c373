#include "grcn/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "grcn/errors.hpp"
#include "grcn/eval.hpp"

#include "json.hpp"

namespace grcn {

Var bpr_loss(Tape& tape, Var scores_pos, Var scores_neg, const std::vector<Var>& params,
             double lambda, bool reg_squared) {
    const Tensor& pos = tape.value(scores_pos);
    const Tensor& neg = tape.value(scores_neg);
    if (!pos.same_shape(neg)) {
        throw ShapeError("bpr_loss: score shapes differ, " + pos.shape_str() + " vs " +
                         neg.shape_str());
    }
    // -ln sigmoid(pos - neg) == softplus(neg - pos)
    Var pairwise = tape.sum(tape.softplus(tape.sub(scores_neg, scores_pos)));
    if (lambda == 0.0 || params.empty()) return pairwise;
    Var reg = reg_squared ? tape.sum_squares_many(params) : tape.l2_norm_many(params);
    return tape.add(pairwise, tape.scale(reg, lambda));
}

void Adam::step(std::vector<std::pair<std::string, Tensor*>>& params,
                const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam: parameter/gradient count mismatch");
    }
    if (first_moment_.empty()) {
        for (auto& [name, p] : params) {
            first_moment_.push_back(Tensor::zeros_like(*p));
            second_moment_.push_back(Tensor::zeros_like(*p));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].second->same_shape(*grads[i])) {
            throw ShapeError("adam: gradient shape " + grads[i]->shape_str() +
                             " does not match parameter " + params[i].first + " " +
                             params[i].second->shape_str());
        }
        if (!grads[i]->all_finite()) {
            throw NumericError("adam: non-finite gradient for parameter " + params[i].first +
                               " at step " + std::to_string(step_ + 1));
        }
    }
    step_ += 1;
    double b1 = config_.beta1, b2 = config_.beta2;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].second;
        const Tensor& g = *grads[i];
        Tensor& m = first_moment_[i];
        Tensor& v = second_moment_[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

std::string train_report_jsonl(const TrainReport& report) {
    std::string out;
    for (const auto& e : report.epochs) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["mean_loss"] = e.mean_loss;
        j["val_recall_at_10"] = e.val_recall_at_10;
        j["wall_seconds"] = e.wall_seconds;
        out += j.dump() + "\n";
    }
    nlohmann::ordered_json tail;
    tail["stopped_epoch"] = report.stopped_epoch;
    tail["best_epoch"] = report.best_epoch;
    tail["best_val_recall"] = report.best_val_recall;
    out += tail.dump() + "\n";
    return out;
}

FitResult fit(const InteractionGraph& graph, const FeatureSet& features,
              const Hyperparams& hyper, std::uint64_t seed) {
    hyper.validate();
    ModelParams params = ModelParams::init(graph.num_users(), graph.num_items(), features,
                                           hyper, seed);
    TrainReport report;
    if (hyper.max_epochs == 0) {
        return {std::move(params), std::move(report)};
    }

    TrainCsr csr = build_train_csr(graph);
    if (csr.num_edges == 0) throw SamplingError("fit: graph has no train edges");

    Adam adam(AdamConfig{hyper.learning_rate, 0.9, 0.999, 1e-8});
    ModelParams best = params;
    double best_recall = -1.0;
    std::size_t best_epoch = 0;
    std::size_t stale_epochs = 0;

    std::vector<std::size_t> edge_order(csr.num_edges);
    std::iota(edge_order.begin(), edge_order.end(), 0);

    for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng epoch_rng = Rng::derive(seed, "epoch", epoch);
        epoch_rng.shuffle(edge_order);

        double loss_sum = 0.0;
        std::size_t triplets_seen = 0;
        for (std::size_t start = 0; start < csr.num_edges; start += hyper.batch_size) {
            std::size_t stop = std::min(csr.num_edges, start + hyper.batch_size);
            std::vector<std::uint32_t> bu, bi, bj;
            bu.reserve(stop - start);
            for (std::size_t c = start; c < stop; ++c) {
                std::size_t e = edge_order[c];
                std::uint32_t u = csr.edge_user[e];
                bu.push_back(u);
                bi.push_back(csr.edge_item[e]);
                bj.push_back(sample_negative_item(graph, u, epoch_rng));
            }

            Tape tape;
            BoundModel bound = bind_params(tape, params);
            ForwardResult fwd = run_forward(tape, csr, features, bound, params);
            Var pos = tape.edge_dot(fwd.user_repr, fwd.item_repr, bu, bi);
            Var neg = tape.edge_dot(fwd.user_repr, fwd.item_repr, bu, bj);
            std::vector<Var> trainable_vars;
            for (auto& [name, v] : bound.named) trainable_vars.push_back(v);
            Var loss = bpr_loss(tape, pos, neg, trainable_vars, hyper.reg_lambda,
                                hyper.reg_squared);
            double loss_value = tape.value(loss)[0];
            if (!std::isfinite(loss_value)) {
                throw NumericError("fit: non-finite loss in epoch " + std::to_string(epoch) +
                                   ", batch at offset " + std::to_string(start) + ", seed " +
                                   std::to_string(seed));
            }
            loss_sum += loss_value;
            triplets_seen += stop - start;

            tape.backward(loss);
            auto named = params.trainable();
            std::vector<const Tensor*> grads;
            grads.reserve(named.size());
            for (std::size_t i = 0; i < named.size(); ++i) {
                grads.push_back(&tape.grad(bound.named[i].second));
            }
            adam.step(named, grads);
        }

        Representations repr = compute_representations(csr, features, params);
        RankingResult val = evaluate_split(repr, graph, Partition::validation, 10);
        auto t1 = std::chrono::steady_clock::now();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(triplets_seen);
        rec.val_recall_at_10 = val.recall;
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        report.epochs.push_back(rec);
        report.stopped_epoch = epoch;

        if (val.recall > best_recall) {
            best_recall = val.recall;
            best = params;
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if (stale_epochs >= hyper.patience) break;
        }
    }
    report.best_epoch = best_epoch;
    report.best_val_recall = best_recall < 0.0 ? 0.0 : best_recall;
    return {std::move(best), std::move(report)};
}

}  // namespace grcn
