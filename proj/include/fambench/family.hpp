#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fambench/text.hpp"

namespace fambench {

// One environment parameter and the grid of values it may take across the
// family. Values are strictly increasing so that grid indices are
// unambiguous.
struct ContextFeature {
    std::string name;
    std::vector<double> values;
};

inline void validate(const ContextFeature& f) {
    if (f.name.empty()) throw std::invalid_argument("context feature needs a name");
    if (f.values.empty())
        throw std::invalid_argument("context feature '" + f.name + "' has no values");
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        if (!std::isfinite(f.values[i]))
            throw std::invalid_argument("context feature '" + f.name + "' has a non-finite value");
        if (i > 0 && !(f.values[i] > f.values[i - 1]))
            throw std::invalid_argument("context feature '" + f.name +
                                        "' values must be strictly increasing");
    }
}

struct ContextSpace {
    std::string task_id;
    std::vector<ContextFeature> features;

    std::size_t dimension() const { return features.size(); }

    std::size_t cardinality() const {
        std::size_t m = 1;
        for (const auto& f : features) m *= f.values.size();
        return m;
    }
};

inline void validate(const ContextSpace& space) {
    std::set<std::string> names;
    for (const auto& f : space.features) {
        validate(f);
        if (!names.insert(f.name).second)
            throw std::invalid_argument("duplicate context feature name '" + f.name + "'");
    }
}

// A single fully specified MDP: one context vector tau plus its rank in the
// family's row-major enumeration.
struct PointMdp {
    std::size_t index = 0;
    std::vector<double> tau;
};

// Row-major over the grid: the last feature varies fastest.
inline std::vector<std::size_t> multi_index_of(const ContextSpace& space, std::size_t index) {
    std::vector<std::size_t> mi(space.dimension());
    for (std::size_t d = space.dimension(); d-- > 0;) {
        const std::size_t n = space.features[d].values.size();
        mi[d] = index % n;
        index /= n;
    }
    if (index != 0) throw std::out_of_range("point index outside family");
    return mi;
}

inline std::size_t index_of(const ContextSpace& space, const std::vector<std::size_t>& mi) {
    if (mi.size() != space.dimension()) throw std::invalid_argument("multi-index arity mismatch");
    std::size_t index = 0;
    for (std::size_t d = 0; d < mi.size(); ++d) {
        const std::size_t n = space.features[d].values.size();
        if (mi[d] >= n) throw std::out_of_range("multi-index component out of range");
        index = index * n + mi[d];
    }
    return index;
}

inline std::vector<double> tau_of(const ContextSpace& space, std::size_t index) {
    const auto mi = multi_index_of(space, index);
    std::vector<double> tau(space.dimension());
    for (std::size_t d = 0; d < tau.size(); ++d) tau[d] = space.features[d].values[mi[d]];
    return tau;
}

// The set U of point MDPs. Grid families hold exactly the full Cartesian
// product of the space's feature values; explicit families carry a caller
// supplied list of tau vectors (irregular domains such as a fixed set of
// intersections).
struct MdpFamily {
    ContextSpace space;
    std::vector<PointMdp> members;
    bool explicit_members = false;

    std::size_t size() const { return members.size(); }

    const PointMdp& at(std::size_t i) const {
        if (i >= members.size()) throw std::out_of_range("point index outside family");
        return members[i];
    }
};

// Enumerates the full Cartesian product in row-major order. A space with
// zero features yields the singleton nominal MDP (tau = ()).
inline MdpFamily enumerate_family(const ContextSpace& space) {
    validate(space);
    MdpFamily family;
    family.space = space;
    const std::size_t m = space.cardinality();
    family.members.reserve(m);
    for (std::size_t i = 0; i < m; ++i) family.members.push_back({i, tau_of(space, i)});
    return family;
}

// Escape hatch for irregular families: members are the given tau vectors in
// order. Duplicate tau vectors are rejected; multiplicity belongs in the
// importance distribution, not the member list.
inline MdpFamily make_explicit_family(const ContextSpace& space,
                                      const std::vector<std::vector<double>>& taus) {
    for (const auto& f : space.features) validate(f);
    MdpFamily family;
    family.space = space;
    family.explicit_members = true;
    std::set<std::vector<double>> seen;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (taus[i].size() != space.dimension())
            throw std::invalid_argument("explicit tau arity mismatch at row " + std::to_string(i));
        for (double v : taus[i])
            if (!std::isfinite(v))
                throw std::invalid_argument("explicit tau has non-finite value at row " +
                                            std::to_string(i));
        if (!seen.insert(taus[i]).second)
            throw std::invalid_argument("duplicate tau vector at row " + std::to_string(i));
        family.members.push_back({i, taus[i]});
    }
    if (family.members.empty()) throw std::invalid_argument("explicit family is empty");
    return family;
}

inline void validate(const MdpFamily& family) {
    for (const auto& f : family.space.features) validate(f);
    if (family.members.empty()) throw std::invalid_argument("family is empty");
    for (std::size_t i = 0; i < family.members.size(); ++i) {
        const auto& p = family.members[i];
        if (p.index != i) throw std::invalid_argument("family indices must be 0..M-1 without gaps");
        if (p.tau.size() != family.space.dimension())
            throw std::invalid_argument("member tau arity mismatch");
    }
    if (!family.explicit_members) {
        if (family.members.size() != family.space.cardinality())
            throw std::invalid_argument("grid family size must equal space cardinality");
        for (const auto& p : family.members)
            if (p.tau != tau_of(family.space, p.index))
                throw std::invalid_argument("grid family member out of row-major order");
    }
}

// --- plain-text tabular serialization ------------------------------------
//
// Header row of feature names (first column "index"), one row per point MDP.
// An optional trailing "p" column carries importance mass; see
// distribution.hpp for the builders.

inline TextTable family_table(const MdpFamily& family, const std::vector<double>* mass = nullptr) {
    TextTable t;
    t.header.push_back("index");
    for (const auto& f : family.space.features) t.header.push_back(f.name);
    if (mass) t.header.push_back("p");
    for (const auto& p : family.members) {
        std::vector<std::string> row;
        row.push_back(std::to_string(p.index));
        for (double v : p.tau) row.push_back(fmt_double(v));
        if (mass) row.push_back(fmt_double((*mass)[p.index]));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void save_family(const MdpFamily& family, const std::filesystem::path& path,
                        const std::vector<double>* mass = nullptr) {
    family_table(family, mass).save(path);
}

struct LoadedFamily {
    MdpFamily family;
    std::vector<double> mass;  // empty when the file has no p column
};

inline LoadedFamily load_family(const std::filesystem::path& path,
                                const std::string& task_id = "") {
    const TextTable t = TextTable::load(path);
    if (t.header.empty() || t.header[0] != "index")
        throw std::runtime_error("family file must start with an 'index' column");
    const bool has_mass = !t.header.empty() && t.header.back() == "p";
    const std::size_t dim = t.header.size() - 1 - (has_mass ? 1 : 0);

    ContextSpace space;
    space.task_id = task_id;
    std::vector<std::set<double>> observed(dim);
    std::vector<std::vector<double>> taus;
    std::vector<double> mass;
    for (const auto& row : t.rows) {
        if (parse_int(row[0]) != static_cast<long long>(taus.size()))
            throw std::runtime_error("family file indices must be 0..M-1 in order");
        std::vector<double> tau(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            tau[d] = parse_double(row[1 + d]);
            observed[d].insert(tau[d]);
        }
        taus.push_back(std::move(tau));
        if (has_mass) mass.push_back(parse_double(row.back()));
    }
    for (std::size_t d = 0; d < dim; ++d) {
        ContextFeature f;
        f.name = t.header[1 + d];
        f.values.assign(observed[d].begin(), observed[d].end());
        space.features.push_back(std::move(f));
    }

    LoadedFamily out;
    // Recognize full-grid files so they round-trip as grid families.
    bool is_grid = space.cardinality() == taus.size();
    if (is_grid) {
        for (std::size_t i = 0; i < taus.size() && is_grid; ++i)
            is_grid = taus[i] == tau_of(space, i);
    }
    if (is_grid) {
        out.family = enumerate_family(space);
    } else {
        out.family = make_explicit_family(space, taus);
    }
    out.mass = std::move(mass);
    return out;
}

}  // namespace fambench
