#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "psbfem/element.hpp"
#include "psbfem/geometry.hpp"
#include "psbfem/solver.hpp"

namespace psbfem {

/// Compiled arithmetic expression over x, y, t.
///
/// Grammar: + - * / (binary), unary + -, parentheses, decimal numbers, the
/// variables x, y, t, the constant pi and the functions sin, cos, sinh, cosh,
/// exp. Names are case-insensitive.
class Expression {
public:
    Expression() = default;

    /// Throws ParseError; `line`/`column` locate the text's first character.
    static Expression parse(std::string_view text, std::size_t line = 1, std::size_t column = 1);

    double operator()(double x, double y, double t) const;
    const std::string& source() const { return source_; }
    ScalarField field() const;

    struct Op;

private:
    std::shared_ptr<const std::vector<Op>> program_;
    std::size_t stack_size_ = 0;
    std::string source_;
};

struct DeckNode {
    long long label = 0;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const DeckNode&, const DeckNode&) = default;
};

/// *USER ELEMENT card and its active-DOF data line.
struct UserElementType {
    std::string type;  // upper case, e.g. "U5" or "UQT6"
    int nodes = 0;
    int properties = 0;
    int coordinates = 2;
    std::string active_dof = "11";

    friend bool operator==(const UserElementType&, const UserElementType&) = default;
};

struct DeckElement {
    long long label = 0;
    std::vector<long long> nodes;

    friend bool operator==(const DeckElement&, const DeckElement&) = default;
};

/// One *ELEMENT card.
struct ElementBlock {
    std::string type;
    std::string elset;
    std::vector<DeckElement> elements;

    friend bool operator==(const ElementBlock&, const ElementBlock&) = default;
};

/// *UEL PROPERTY: (conductivity, density, specific heat) for an element set.
struct ElsetProperty {
    std::string elset;
    Material material;

    friend bool operator==(const ElsetProperty&, const ElsetProperty&) = default;
};

/// *BOUNDARY-TEMP data line: prescribed temperature on an edge tag.
struct BoundaryTemp {
    std::string edge_tag;
    std::string expression;

    friend bool operator==(const BoundaryTemp&, const BoundaryTemp&) = default;
};

struct StepCard {
    bool transient = false;
    double dt = 0.0;
    double t_end = 0.0;

    friend bool operator==(const StepCard&, const StepCard&) = default;
};

/// Parsed input deck. Element-set names are stored upper case.
struct InputDeck {
    std::vector<DeckNode> nodes;
    std::vector<UserElementType> user_elements;
    std::vector<ElementBlock> blocks;
    std::vector<ElsetProperty> properties;
    std::vector<BoundaryTemp> boundaries;
    std::optional<std::string> initial_temperature;
    std::optional<StepCard> step;

    friend bool operator==(const InputDeck&, const InputDeck&) = default;
};

/// Parses the deck dialect. Throws ParseError with line and column.
InputDeck parse_inp(std::string_view text);
InputDeck read_inp(const std::filesystem::path& path);

/// Serializes a deck; parse_inp(write_inp(d)) == d.
std::string write_inp(const InputDeck& deck);

/// Deck for a mesh: one *USER ELEMENT per vertex count (type prefix "U" or
/// "UQT"), one element set per (vertex count, material) and its properties.
InputDeck mesh_to_deck(const Mesh& mesh, const MaterialTable& materials, const std::string& type_prefix = "U");

struct SolveCase {
    Mesh mesh;
    MaterialTable materials;
    std::vector<BoundaryCondition> bcs;
    StepCard step;
    std::function<double(double, double)> initial;
    std::vector<long long> node_labels;     // deck label of each mesh node
    std::vector<long long> element_labels;  // deck label of each cell
};

/// Builds and validates the mesh, maps element sets to materials, compiles the
/// boundary and initial expressions. Boundary edges are tagged from the node
/// bounding box ("left", "right", "bottom", "top", otherwise "boundary").
/// A deck without a step card is a steady case.
SolveCase deck_to_case(const InputDeck& deck);

/// Nodal temperature histories of a solved case.
struct CaseResult {
    Mesh mesh;
    std::vector<ElementMatrices> elements;
    std::vector<TransientState> states;
    double wall_seconds = 0.0;
    double max_residual = 0.0;
    Index dofs = 0;
    std::size_t steps = 0;
};

/// Samples a case's temperature at fixed points: the nodal value when the
/// point coincides with a node, the element interior solution otherwise.
class ProbeSampler {
public:
    ProbeSampler(const Mesh& mesh, std::span<const ElementMatrices> elements, std::span<const Point2D> points);

    std::vector<double> sample(const Eigen::VectorXd& T) const;
    std::size_t size() const { return targets_.size(); }

private:
    struct Target {
        std::optional<Index> node;
        CellLocation where;
    };
    const Mesh* mesh_;
    std::span<const ElementMatrices> elements_;
    std::vector<Target> targets_;
};

/// VTK XML UnstructuredGrid with polygon cells and point data "Temperature".
std::string vtu_string(const Mesh& mesh, const Eigen::VectorXd& field, const std::string& name = "Temperature");
void write_vtu(const Mesh& mesh, const Eigen::VectorXd& field, const std::filesystem::path& path,
               const std::string& name = "Temperature");

/// Contents of an ASCII .vtu file as written by write_vtu.
struct VtuData {
    std::vector<Point2D> points;
    std::vector<long long> connectivity;
    std::vector<long long> offsets;
    std::vector<int> types;
    std::map<std::string, std::vector<double>> point_data;
};

VtuData read_vtu(const std::filesystem::path& path);

struct TimeSeriesFiles {
    std::vector<std::filesystem::path> vtu;
    std::filesystem::path pvd;
    std::optional<std::filesystem::path> probes_csv;
};

/// Writes <prefix>_NNNNNN.vtu per state, <prefix>.pvd, and <prefix>_probes.csv
/// (time plus one column per probe) when probes are given.
TimeSeriesFiles write_time_series(const CaseResult& result, const std::filesystem::path& directory,
                                  std::span<const Point2D> probes = {}, const std::string& prefix = "solution");

}  // namespace psbfem
