// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Trace-event export/import (the JSON format chrome://tracing and Perfetto
// read: one complete "X" event per simulator event, device as process, lane
// as thread) and self-contained SVG renderings: a schedule Gantt plus simple
// bar charts for the cost-model reports. Output is deterministic byte for
// byte for identical inputs.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/pipeline_sim.hpp"

namespace edgetune {

namespace detail {

inline int lane_for(EventKind k) {
    switch (k) {
        case EventKind::SendAct:
        case EventKind::SendGrad: return 1;  // outgoing transfers
        case EventKind::RecvAct:
        case EventKind::RecvGrad: return 2;  // incoming transfers
        default: return 0;                   // compute
    }
}

inline std::string cell_label(const SimEvent& e) {
    switch (e.kind) {
        case EventKind::FwdCell: return "F" + std::to_string(e.micro_batch);
        case EventKind::BwdCell: return "B" + std::to_string(e.micro_batch);
        case EventKind::AllReduce: return "AR";
        case EventKind::CacheLoad: return "L" + std::to_string(e.micro_batch);
        case EventKind::Redistribute: return "RD";
        default: return to_string(e.kind);
    }
}

}  // namespace detail

inline nlohmann::json trace_to_json(const ScheduleTrace& trace) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["displayTimeUnit"] = "ms";
    j["makespan_us"] = trace.makespan_us;
    j["phases"] = {{"beginning_us", trace.phases.beginning_us},
                   {"execution_us", trace.phases.execution_us},
                   {"ending_us", trace.phases.ending_us}};
    j["per_device_peak_bytes"] = trace.per_device_peak_bytes;
    j["traceEvents"] = nlohmann::json::array();
    for (const auto& e : trace.events) {
        nlohmann::json je;
        je["name"] = detail::cell_label(e);
        je["cat"] = to_string(e.kind);
        je["ph"] = "X";
        je["ts"] = e.start_us;
        je["dur"] = e.end_us - e.start_us;
        je["pid"] = e.device;
        je["tid"] = detail::lane_for(e.kind);
        je["args"] = {{"device_id", e.device_id},
                      {"kind", to_string(e.kind)},
                      {"micro_batch", e.micro_batch},
                      {"stage", e.stage}};
        j["traceEvents"].push_back(je);
    }
    return j;
}

inline ScheduleTrace trace_from_json(const nlohmann::json& j) {
    ScheduleTrace t;
    t.makespan_us = j.value("makespan_us", std::int64_t{0});
    if (j.contains("phases")) {
        t.phases.beginning_us = j["phases"].value("beginning_us", std::int64_t{0});
        t.phases.execution_us = j["phases"].value("execution_us", std::int64_t{0});
        t.phases.ending_us = j["phases"].value("ending_us", std::int64_t{0});
    }
    if (j.contains("per_device_peak_bytes"))
        t.per_device_peak_bytes = j["per_device_peak_bytes"].get<std::vector<std::int64_t>>();
    for (const auto& je : j.at("traceEvents")) {
        SimEvent e;
        e.device = je.at("pid").get<int>();
        e.start_us = je.at("ts").get<std::int64_t>();
        e.end_us = e.start_us + je.at("dur").get<std::int64_t>();
        const auto& args = je.at("args");
        e.device_id = args.at("device_id").get<std::string>();
        e.kind = event_kind_from_string(args.at("kind").get<std::string>());
        e.micro_batch = args.at("micro_batch").get<int>();
        e.stage = args.at("stage").get<int>();
        t.events.push_back(std::move(e));
    }
    return t;
}

inline void export_trace(const ScheduleTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SimError("cannot write trace file '" + path + "'");
    out << trace_to_json(trace).dump(2) << "\n";
    if (!out) throw SimError("short write to '" + path + "'");
}

inline ScheduleTrace import_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SimError("cannot open trace file '" + path + "'");
    nlohmann::json j;
    in >> j;
    return trace_from_json(j);
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

namespace detail {

inline const char* fill_for(EventKind k) {
    switch (k) {
        case EventKind::FwdCell: return "#4c9ed9";
        case EventKind::BwdCell: return "#9fd49b";
        case EventKind::AllReduce: return "#e8b84d";
        case EventKind::CacheLoad: return "#c5a3d9";
        case EventKind::Redistribute: return "#d98a7a";
        case EventKind::SendAct:
        case EventKind::SendGrad: return "#bbccdd";
        case EventKind::RecvAct:
        case EventKind::RecvGrad: return "#dde5ee";
    }
    return "#cccccc";
}

inline std::string fmt1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace detail

// One row per device (compute lane cells only; transfers are thin underlays).
inline std::string render_gantt_svg(const ScheduleTrace& trace) {
    std::map<int, std::string> device_ids;
    std::map<int, int> device_stage;
    for (const auto& e : trace.events) {
        device_ids[e.device] = e.device_id;
        if (e.stage >= 0 && detail::lane_for(e.kind) == 0) device_stage[e.device] = e.stage;
    }
    const double width = 960.0, row_h = 28.0, label_w = 110.0, top = 24.0;
    const double span = std::max<std::int64_t>(trace.makespan_us, 1);
    const double height = top + row_h * static_cast<double>(device_ids.size()) + 12.0;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg << "<text x=\"4\" y=\"14\">makespan " << detail::fmt1(trace.makespan_us / 1000.0)
        << " ms</text>\n";
    int row = 0;
    for (const auto& [dev, id] : device_ids) {
        const double y = top + row_h * row;
        svg << "<g id=\"device-" << id << "\" data-stage=\"" << device_stage[dev] << "\">\n";
        svg << "  <text x=\"4\" y=\"" << y + 18 << "\">" << id << "</text>\n";
        for (const auto& e : trace.events) {
            if (e.device != dev) continue;
            const bool compute = detail::lane_for(e.kind) == 0;
            const double x = label_w + (width - label_w - 8) * e.start_us / span;
            const double w =
                std::max(1.0, (width - label_w - 8) * (e.end_us - e.start_us) / span);
            const double h = compute ? row_h - 8 : 4.0;
            const double ry = compute ? y + 2 : y + row_h - 7;
            svg << "  <rect x=\"" << detail::fmt1(x) << "\" y=\"" << detail::fmt1(ry)
                << "\" width=\"" << detail::fmt1(w) << "\" height=\"" << h << "\" fill=\""
                << detail::fill_for(e.kind) << "\" stroke=\"#445\"/>\n";
            if (compute && e.kind != EventKind::AllReduce && w > 10)
                svg << "  <text class=\"cell\" x=\"" << detail::fmt1(x + w / 2 - 4) << "\" y=\""
                    << detail::fmt1(y + row_h / 2 + 3) << "\">" << detail::cell_label(e)
                    << "</text>\n";
        }
        svg << "</g>\n";
        ++row;
    }
    svg << "</svg>\n";
    return svg.str();
}

struct BarDatum {
    std::string label;
    std::vector<double> parts;  // stacked segments
};

// Horizontal stacked bars (FLOPs and memory report figures).
inline std::string render_bars_svg(const std::string& title,
                                   const std::vector<std::string>& part_names,
                                   const std::vector<BarDatum>& data, const std::string& unit) {
    static const char* palette[] = {"#4c9ed9", "#9fd49b", "#e8b84d", "#c5a3d9", "#d98a7a"};
    double maxv = 1e-12;
    for (const auto& d : data) {
        double sum = 0;
        for (double p : d.parts) sum += p;
        maxv = std::max(maxv, sum);
    }
    const double width = 720.0, row_h = 30.0, label_w = 150.0, top = 40.0;
    const double height = top + row_h * static_cast<double>(data.size()) + 24.0;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg << "<text x=\"4\" y=\"14\">" << title << "</text>\n";
    for (std::size_t p = 0; p < part_names.size(); ++p)
        svg << "<rect x=\"" << 4 + 130 * p << "\" y=\"20\" width=\"10\" height=\"10\" fill=\""
            << palette[p % 5] << "\"/><text x=\"" << 18 + 130 * p << "\" y=\"29\">"
            << part_names[p] << "</text>\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double y = top + row_h * static_cast<double>(i);
        svg << "<text x=\"4\" y=\"" << y + 16 << "\">" << data[i].label << "</text>\n";
        double x = label_w;
        double sum = 0;
        for (std::size_t p = 0; p < data[i].parts.size(); ++p) {
            const double w = (width - label_w - 90) * data[i].parts[p] / maxv;
            svg << "<rect x=\"" << detail::fmt1(x) << "\" y=\"" << y + 4 << "\" width=\""
                << detail::fmt1(std::max(0.5, w)) << "\" height=\"" << row_h - 10 << "\" fill=\""
                << palette[p % 5] << "\" stroke=\"#445\"/>\n";
            x += w;
            sum += data[i].parts[p];
        }
        svg << "<text x=\"" << detail::fmt1(x + 6) << "\" y=\"" << y + 16 << "\">"
            << detail::fmt1(sum) << " " << unit << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace edgetune
