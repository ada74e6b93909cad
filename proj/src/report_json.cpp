#include "cosettle/report_json.hpp"

#include <fstream>

#include "cosettle/error.hpp"

namespace cosettle {

Json to_json(const TradeoffMetrics& m) {
    return Json{{"d_inter_ori", m.d_inter_ori},
                {"r_inter", m.r_inter},
                {"d_inter", m.d_inter},
                {"d_intra_ori", m.d_intra_ori},
                {"d_intra", m.d_intra},
                {"gamma", m.gamma},
                {"margin", m.margin},
                {"cyc_acc", m.cyc_acc},
                {"inter_degenerate", m.inter_degenerate},
                {"intra_degenerate_videos", m.intra_degenerate_videos}};
}

Json to_json(const StepRecord& r) {
    return Json{{"kind", "step"}, {"step", r.step},       {"epoch", r.epoch},     {"lr", r.lr},
                {"cyc", r.cyc},   {"reg", r.reg},         {"total", r.total},     {"cyc_acc", r.cyc_acc},
                {"clamped", r.clamped}};
}

Json to_json(const EpochRecord& r) {
    Json j{{"kind", "epoch"}, {"epoch", r.epoch}, {"cyc", r.cyc},
           {"reg", r.reg},    {"total", r.total}, {"isometry_defect", r.isometry_defect}};
    j["metrics"] = r.metrics ? to_json(*r.metrics) : Json(nullptr);
    return j;
}

Json to_json(const SpectralReport& r) {
    return Json{{"sigma", r.sigma},
                {"tau_bar", r.tau_bar},
                {"lambda", r.lambda},
                {"mu_star", r.mu_star},
                {"mu_hat", r.mu_hat},
                {"delta_closed", r.delta_closed},
                {"delta_empirical", r.delta_empirical},
                {"positivity_condition", r.positivity_condition},
                {"mode", to_string(r.mode)},
                {"iterations", r.iterations},
                {"residual", r.residual},
                {"max_abs_error", r.max_abs_error},
                {"samples", r.samples}};
}

Json to_json(const ShortcutProbeReport& r) {
    return Json{{"setting", to_string(r.setting)},
                {"steps", r.steps},
                {"loss", r.loss_curve},
                {"identity_accuracy", r.identity_accuracy_curve}};
}

Json to_json(const GradcheckReport& r) {
    Json cases = Json::array();
    for (const auto& c : r.cases) {
        cases.push_back(Json{{"projection", to_string(c.kind)},
                             {"loss", to_string(c.loss)},
                             {"instances", c.instances},
                             {"entries", c.entries},
                             {"max_rel_error", c.max_rel_error},
                             {"passed", c.passed}});
    }
    return Json{{"passed", r.passed}, {"tolerance", r.tolerance}, {"step", r.step}, {"cases", cases}};
}

std::string history_json_lines(const TrainHistory& history) {
    std::string out;
    if (history.initial_metrics) {
        Json init{{"kind", "initial"}, {"isometry_defect", history.initial_isometry_defect}};
        init["metrics"] = to_json(*history.initial_metrics);
        out += init.dump() + "\n";
    } else {
        out += Json{{"kind", "initial"}, {"isometry_defect", history.initial_isometry_defect}, {"metrics", nullptr}}
                   .dump() +
               "\n";
    }
    for (const auto& s : history.steps) out += to_json(s).dump() + "\n";
    for (const auto& e : history.epochs) out += to_json(e).dump() + "\n";
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace cosettle
