#include "atlasloom/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace atlasloom::io {

using nlohmann::json;

namespace {

json perm_to_json(const SignedPermutation& p) {
    json rows = json::array();
    for (int r = 0; r < 3; ++r) {
        json row = json::array();
        for (int c = 0; c < 3; ++c) row.push_back(p.at(r, c));
        rows.push_back(row);
    }
    return rows;
}

SignedPermutation perm_from_json(const json& j) {
    SignedPermutation p;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.at(r, c) = j.at(r).at(c).get<int>();
    if (!p.valid()) throw std::runtime_error("manifest: invalid permutation matrix");
    return p;
}

json vec_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json truth_to_json(const TruthTransform& t) {
    return json{{"permutation", perm_to_json(t.permutation)},
                {"rotation_deg", vec_to_json(t.rigid.rotation_deg)},
                {"translation_mm", vec_to_json(t.rigid.translation_mm)}};
}

TruthTransform truth_from_json(const json& j) {
    TruthTransform t;
    t.permutation = perm_from_json(j.at("permutation"));
    t.rigid.rotation_deg = vec_from_json(j.at("rotation_deg"));
    t.rigid.translation_mm = vec_from_json(j.at("translation_mm"));
    return t;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    json j;
    in >> j;
    return j;
}

}  // namespace

void save_manifest(const CohortManifest& m, const std::string& path) {
    json subjects = json::array();
    for (const auto& s : m.subjects) {
        json stacks = json::array();
        for (const auto& st : s.stacks)
            stacks.push_back(json{{"path", st.path},
                                  {"slice_axis", st.slice_axis},
                                  {"slice_thickness_mm", st.slice_thickness_mm},
                                  {"in_plane_mm", st.in_plane_mm},
                                  {"truth_transform", truth_to_json(st.truth)}});
        subjects.push_back(json{{"id", s.id},
                                {"ga_weeks", s.ga_weeks},
                                {"seg", s.seg},
                                {"gt", s.gt},
                                {"analytic_volumes_cm3", s.analytic_volumes_cm3},
                                {"stacks", stacks}});
    }
    write_json_file(json{{"template", m.template_path},
                         {"num_classes", m.num_classes},
                         {"subjects", subjects}},
                    path);
}

CohortManifest load_manifest(const std::string& path) {
    const json j = read_json_file(path);
    CohortManifest m;
    m.template_path = j.at("template").get<std::string>();
    m.num_classes = j.at("num_classes").get<int>();
    for (const auto& js : j.at("subjects")) {
        SubjectEntry s;
        s.id = js.at("id").get<std::string>();
        s.ga_weeks = js.at("ga_weeks").get<double>();
        s.seg = js.at("seg").get<std::string>();
        s.gt = js.value("gt", std::string());
        if (js.contains("analytic_volumes_cm3"))
            s.analytic_volumes_cm3 = js.at("analytic_volumes_cm3").get<std::vector<double>>();
        for (const auto& jst : js.at("stacks")) {
            StackEntry st;
            st.path = jst.at("path").get<std::string>();
            st.slice_axis = jst.at("slice_axis").get<int>();
            st.slice_thickness_mm = jst.at("slice_thickness_mm").get<double>();
            st.in_plane_mm = jst.at("in_plane_mm").get<double>();
            if (jst.contains("truth_transform"))
                st.truth = truth_from_json(jst.at("truth_transform"));
            s.stacks.push_back(std::move(st));
        }
        m.subjects.push_back(std::move(s));
    }
    return m;
}

void save_registered_manifest(const RegisteredManifest& m, const std::string& path) {
    json subjects = json::array();
    for (const auto& s : m.subjects) {
        json stacks = json::array();
        for (const auto& st : s.stacks)
            stacks.push_back(json{{"vstar", st.vstar},
                                  {"weights", st.weights},
                                  {"slice_thickness_mm", st.slice_thickness_mm},
                                  {"in_plane_mm", st.in_plane_mm}});
        subjects.push_back(json{{"id", s.id},
                                {"ga_weeks", s.ga_weeks},
                                {"seg", s.seg},
                                {"gt", s.gt},
                                {"stacks", stacks}});
    }
    write_json_file(json{{"template", m.template_path},
                         {"num_classes", m.num_classes},
                         {"subjects", subjects}},
                    path);
}

RegisteredManifest load_registered_manifest(const std::string& path) {
    const json j = read_json_file(path);
    RegisteredManifest m;
    m.template_path = j.at("template").get<std::string>();
    m.num_classes = j.at("num_classes").get<int>();
    for (const auto& js : j.at("subjects")) {
        RegisteredSubject s;
        s.id = js.at("id").get<std::string>();
        s.ga_weeks = js.at("ga_weeks").get<double>();
        s.seg = js.at("seg").get<std::string>();
        s.gt = js.value("gt", std::string());
        for (const auto& jst : js.at("stacks")) {
            RegisteredStackEntry st;
            st.vstar = jst.at("vstar").get<std::string>();
            st.weights = jst.at("weights").get<std::string>();
            st.slice_thickness_mm = jst.at("slice_thickness_mm").get<double>();
            st.in_plane_mm = jst.at("in_plane_mm").get<double>();
            s.stacks.push_back(std::move(st));
        }
        m.subjects.push_back(std::move(s));
    }
    return m;
}

std::string resolve_relative(const std::string& manifest_path, const std::string& entry) {
    if (entry.empty() || entry.front() == '/') return entry;
    return (std::filesystem::path(manifest_path).parent_path() / entry).string();
}

}  // namespace atlasloom::io
