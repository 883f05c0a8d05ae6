// Dataset manifests: the raw cohort layout written by phantom generation
// and the registered layout consumed by training. JSON on disk.
#pragma once

#include <string>
#include <vector>

#include "atlasloom/geometry.hpp"

namespace atlasloom::io {

struct TruthTransform {
    SignedPermutation permutation;
    RigidTransform rigid;
};

struct StackEntry {
    std::string path;
    int slice_axis = 2;
    double slice_thickness_mm = 0.0;
    double in_plane_mm = 0.0;
    TruthTransform truth;
};

struct SubjectEntry {
    std::string id;
    double ga_weeks = 0.0;
    std::string seg;
    std::string gt;
    std::vector<double> analytic_volumes_cm3;
    std::vector<StackEntry> stacks;
};

struct CohortManifest {
    std::string template_path;
    int num_classes = 0;
    std::vector<SubjectEntry> subjects;
};

struct RegisteredStackEntry {
    std::string vstar;
    std::string weights;
    double slice_thickness_mm = 0.0;
    double in_plane_mm = 0.0;
};

struct RegisteredSubject {
    std::string id;
    double ga_weeks = 0.0;
    std::string seg;
    std::string gt;
    std::vector<RegisteredStackEntry> stacks;
};

struct RegisteredManifest {
    std::string template_path;
    int num_classes = 0;
    std::vector<RegisteredSubject> subjects;
};

void save_manifest(const CohortManifest& m, const std::string& path);
CohortManifest load_manifest(const std::string& path);

void save_registered_manifest(const RegisteredManifest& m, const std::string& path);
RegisteredManifest load_registered_manifest(const std::string& path);

// Paths inside manifests are relative to the manifest file's directory.
std::string resolve_relative(const std::string& manifest_path, const std::string& entry);

}  // namespace atlasloom::io
