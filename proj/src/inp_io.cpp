#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "psbfem/error.hpp"
#include "psbfem/inp_io.hpp"

namespace psbfem {

namespace {

std::string upper(std::string_view s) {
    std::string r(s);
    for (auto& c : r) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return r;
}

std::string lower(std::string_view s) {
    std::string r(s);
    for (auto& c : r) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return r;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// A slice of a source line with its 1-based starting column.
struct Field {
    std::string_view text;
    std::size_t column;
};

Field trim(Field f) {
    std::size_t a = 0, b = f.text.size();
    while (a < b && is_space(f.text[a])) ++a;
    while (b > a && is_space(f.text[b - 1])) --b;
    return {f.text.substr(a, b - a), f.column + a};
}

std::vector<Field> split_commas(Field line) {
    std::vector<Field> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.text.size(); ++i) {
        if (i == line.text.size() || line.text[i] == ',') {
            out.push_back(trim({line.text.substr(start, i - start), line.column + start}));
            start = i + 1;
        }
    }
    if (out.size() > 1 && out.back().text.empty()) out.pop_back();  // trailing comma
    return out;
}

struct Param {
    std::string key;
    std::string value;
    std::size_t column;
    bool used = false;
};

struct DataLine {
    std::size_t line;
    Field text;
};

struct Card {
    std::string name;
    std::size_t line;
    std::vector<Param> params;
    std::vector<DataLine> data;
};

class DeckParser {
public:
    explicit DeckParser(std::string_view text) : text_(text) {}

    InputDeck run() {
        scan();
        bool have_node = false;
        for (auto& card : cards_) {
            if (card.name == "NODE") {
                have_node = true;
                node_card(card);
            } else if (card.name == "USER ELEMENT") {
                user_element_card(card);
            } else if (card.name == "ELEMENT") {
                element_card(card);
            } else if (card.name == "UEL PROPERTY") {
                property_card(card);
            } else if (card.name == "BOUNDARY-TEMP") {
                boundary_card(card);
            } else if (card.name == "INITIAL-TEMP") {
                initial_card(card);
            } else if (card.name == "STEP-STEADY" || card.name == "STEP-TRANSIENT") {
                step_card(card);
            } else {
                throw ParseError("unknown card *" + card.name, card.line, 1);
            }
            for (const auto& p : card.params)
                if (!p.used) throw ParseError("unknown parameter " + p.key + " on *" + card.name, card.line, p.column);
        }
        if (!have_node) throw ParseError("no *NODE card", 1, 1);
        finish();
        return std::move(deck_);
    }

private:
    void scan() {
        std::size_t line_no = 0, pos = 0;
        bool in_card = false;
        while (pos <= text_.size()) {
            std::size_t end = text_.find('\n', pos);
            if (end == std::string_view::npos) end = text_.size();
            ++line_no;
            const Field raw{text_.substr(pos, end - pos), 1};
            pos = end + 1;
            const Field line = trim(raw);
            if (line.text.empty()) continue;
            if (line.text.starts_with("**")) continue;
            if (line.text[0] == '*') {
                cards_.push_back(keyword_line(line, line_no));
                in_card = true;
                continue;
            }
            if (!in_card) throw ParseError("data line before the first card", line_no, line.column);
            cards_.back().data.push_back({line_no, line});
        }
    }

    static Card keyword_line(Field line, std::size_t line_no) {
        Card card;
        card.line = line_no;
        auto parts = split_commas({line.text.substr(1), line.column + 1});
        std::string name;
        bool space = false;
        for (char c : parts[0].text) {
            if (is_space(c)) {
                space = true;
                continue;
            }
            if (space && !name.empty()) name += ' ';
            space = false;
            name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        if (name.empty()) throw ParseError("missing card name", line_no, parts[0].column);
        card.name = name;
        for (std::size_t i = 1; i < parts.size(); ++i) {
            const Field f = parts[i];
            if (f.text.empty()) throw ParseError("empty parameter", line_no, f.column);
            const auto eq = f.text.find('=');
            if (eq == std::string_view::npos) {
                card.params.push_back({upper(f.text), "", f.column});
                continue;
            }
            const Field key = trim({f.text.substr(0, eq), f.column});
            const Field value = trim({f.text.substr(eq + 1), f.column + eq + 1});
            if (key.text.empty()) throw ParseError("parameter without a name", line_no, f.column);
            for (const auto& p : card.params)
                if (p.key == upper(key.text)) throw ParseError("duplicate parameter " + p.key, line_no, key.column);
            card.params.push_back({upper(key.text), std::string(value.text), key.column});
        }
        return card;
    }

    static Param* find(Card& c, std::string_view key) {
        for (auto& p : c.params)
            if (p.key == key) {
                p.used = true;
                return &p;
            }
        return nullptr;
    }

    static Param& require(Card& c, std::string_view key) {
        Param* p = find(c, key);
        if (!p) throw ParseError("*" + c.name + " requires " + std::string(key) + "=", c.line, 1);
        if (p->value.empty()) throw ParseError(std::string(key) + " has no value", c.line, p->column);
        return *p;
    }

    static long long to_int(Field f, std::size_t line, const char* what) {
        long long v = 0;
        const auto r = std::from_chars(f.text.data(), f.text.data() + f.text.size(), v);
        if (f.text.empty() || r.ec != std::errc() || r.ptr != f.text.data() + f.text.size())
            throw ParseError(std::string("expected an integer ") + what, line, f.column);
        return v;
    }

    static double to_double(Field f, std::size_t line, const char* what) {
        std::string_view s = f.text;
        if (!s.empty() && s[0] == '+') s.remove_prefix(1);
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
            throw ParseError(std::string("expected a finite number ") + what, line, f.column);
        return v;
    }

    static int param_int(const Param& p, std::size_t line) {
        const long long v = to_int({p.value, p.column}, line, p.key.c_str());
        if (v < 0 || v > 1000000) throw ParseError(p.key + " out of range", line, p.column);
        return static_cast<int>(v);
    }

    static double param_double(const Param& p, std::size_t line) {
        return to_double({p.value, p.column}, line, p.key.c_str());
    }

    static void no_data(const Card& c) {
        if (!c.data.empty()) throw ParseError("*" + c.name + " takes no data lines", c.data[0].line, c.data[0].text.column);
    }

    void node_card(Card& c) {
        for (const auto& d : c.data) {
            const auto f = split_commas(d.text);
            if (f.size() != 3) throw ParseError("node line needs: label, x, y", d.line, d.text.column);
            const long long label = to_int(f[0], d.line, "node label");
            if (label <= 0) throw ParseError("node label must be positive", d.line, f[0].column);
            if (!node_labels_.insert(label).second)
                throw ParseError("duplicate node " + std::to_string(label), d.line, f[0].column);
            deck_.nodes.push_back({label, to_double(f[1], d.line, "for x"), to_double(f[2], d.line, "for y")});
        }
    }

    static std::optional<int> type_arity(std::string_view type) {
        std::string_view digits;
        if (type.starts_with("UQT")) digits = type.substr(3);
        else if (type.starts_with("U")) digits = type.substr(1);
        else return std::nullopt;
        if (digits.empty() || digits.size() > 6) return std::nullopt;
        int n = 0;
        for (char ch : digits) {
            if (!std::isdigit(static_cast<unsigned char>(ch))) return std::nullopt;
            n = n * 10 + (ch - '0');
        }
        return n;
    }

    void user_element_card(Card& c) {
        UserElementType t;
        const Param& type = require(c, "TYPE");
        const Param& nodes = require(c, "NODES");
        t.type = upper(type.value);
        t.nodes = param_int(nodes, c.line);
        if (Param* p = find(c, "PROPERTIES")) t.properties = param_int(*p, c.line);
        if (Param* p = find(c, "COORDINATES")) {
            t.coordinates = param_int(*p, c.line);
            if (t.coordinates != 2) throw ParseError("only COORDINATES=2 is supported", c.line, p->column);
        }
        const auto arity = type_arity(t.type);
        if (!arity) throw ParseError("element type must be Un or UQTn", c.line, type.column);
        if (t.nodes < 3) throw ParseError("NODES must be at least 3", c.line, nodes.column);
        if (*arity != t.nodes)
            throw ParseError("TYPE=" + t.type + " contradicts NODES=" + std::to_string(t.nodes), c.line, nodes.column);
        if (types_.contains(t.type)) throw ParseError("element type " + t.type + " declared twice", c.line, type.column);
        if (c.data.size() != 1)
            throw ParseError("*USER ELEMENT needs exactly one active degree-of-freedom line", c.line, 1);
        const auto dof = split_commas(c.data[0].text);
        if (dof.size() != 1 || dof[0].text != "11")
            throw ParseError("active degree of freedom must be 11 (temperature)", c.data[0].line, dof[0].column);
        t.active_dof = "11";
        types_[t.type] = t.nodes;
        deck_.user_elements.push_back(t);
    }

    void element_card(Card& c) {
        ElementBlock b;
        const Param& type = require(c, "TYPE");
        const Param& elset = require(c, "ELSET");
        b.type = upper(type.value);
        b.elset = upper(elset.value);
        const auto it = types_.find(b.type);
        if (it == types_.end())
            throw ParseError("element type " + b.type + " has no *USER ELEMENT declaration", c.line, type.column);
        const int n = it->second;
        for (const auto& d : c.data) {
            const auto f = split_commas(d.text);
            const long long label = to_int(f[0], d.line, "element label");
            if (label <= 0) throw ParseError("element label must be positive", d.line, f[0].column);
            if (static_cast<int>(f.size()) - 1 != n)
                throw ParseError("element " + std::to_string(label) + " of type " + b.type + " needs " +
                                     std::to_string(n) + " nodes, got " + std::to_string(f.size() - 1),
                                 d.line, d.text.column);
            if (!element_labels_.insert(label).second)
                throw ParseError("duplicate element " + std::to_string(label), d.line, f[0].column);
            DeckElement e{label, {}};
            for (std::size_t k = 1; k < f.size(); ++k) {
                e.nodes.push_back(to_int(f[k], d.line, "node label"));
                node_refs_.push_back({e.nodes.back(), d.line, f[k].column});
            }
            b.elements.push_back(std::move(e));
        }
        elsets_.insert(b.elset);
        deck_.blocks.push_back(std::move(b));
    }

    void property_card(Card& c) {
        Param* p = find(c, "ELSET");
        Param* alias = find(c, "ELEST");
        if (p && alias) throw ParseError("both ELSET and ELEST given", c.line, alias->column);
        if (!p) p = alias;
        if (!p || p->value.empty()) throw ParseError("*UEL PROPERTY requires ELSET=", c.line, 1);
        ElsetProperty prop;
        prop.elset = upper(p->value);
        std::vector<double> values;
        for (const auto& d : c.data)
            for (const auto& f : split_commas(d.text)) {
                if (values.size() == 3)
                    throw ParseError("expected 3 property values (conductivity, density, specific heat)", d.line, f.column);
                const double v = to_double(f, d.line, "property value");
                if (!(v > 0.0)) throw ParseError("property values must be positive", d.line, f.column);
                values.push_back(v);
            }
        if (values.size() != 3)
            throw ParseError("expected 3 property values (conductivity, density, specific heat), got " +
                                 std::to_string(values.size()),
                             c.data.empty() ? c.line : c.data.back().line, 1);
        prop.material = {values[0], values[1], values[2]};
        for (const auto& q : deck_.properties)
            if (q.elset == prop.elset) throw ParseError("duplicate properties for ELSET " + prop.elset, c.line, p->column);
        property_refs_.push_back({prop.elset, c.line, p->column});
        deck_.properties.push_back(prop);
    }

    void boundary_card(Card& c) {
        if (c.data.empty()) throw ParseError("*BOUNDARY-TEMP needs lines: edge tag, expression", c.line, 1);
        for (const auto& d : c.data) {
            const auto comma = d.text.text.find(',');
            if (comma == std::string_view::npos)
                throw ParseError("expected: edge tag, expression", d.line, d.text.column);
            const Field tag = trim({d.text.text.substr(0, comma), d.text.column});
            const Field expr = trim({d.text.text.substr(comma + 1), d.text.column + comma + 1});
            if (tag.text.empty()) throw ParseError("empty edge tag", d.line, tag.column);
            for (char ch : tag.text)
                if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-')
                    throw ParseError("invalid edge tag", d.line, tag.column);
            Expression::parse(expr.text, d.line, expr.column);
            deck_.boundaries.push_back({lower(tag.text), std::string(expr.text)});
        }
    }

    void initial_card(Card& c) {
        if (deck_.initial_temperature) throw ParseError("more than one *INITIAL-TEMP card", c.line, 1);
        if (c.data.size() != 1) throw ParseError("*INITIAL-TEMP needs exactly one expression line", c.line, 1);
        const Field e = c.data[0].text;
        Expression::parse(e.text, c.data[0].line, e.column);
        deck_.initial_temperature = std::string(e.text);
    }

    void step_card(Card& c) {
        if (deck_.step) throw ParseError("more than one step card", c.line, 1);
        no_data(c);
        StepCard s;
        if (c.name == "STEP-TRANSIENT") {
            const Param& dt = require(c, "DT");
            const Param& time = require(c, "TIME");
            s.transient = true;
            s.dt = param_double(dt, c.line);
            s.t_end = param_double(time, c.line);
            if (!(s.dt > 0.0)) throw ParseError("DT must be positive", c.line, dt.column);
            if (!(s.t_end >= s.dt)) throw ParseError("TIME must be at least DT", c.line, time.column);
        }
        deck_.step = s;
    }

    void finish() {
        for (const auto& r : node_refs_)
            if (!node_labels_.contains(r.label))
                throw ParseError("element references undefined node " + std::to_string(r.label), r.line, r.column);
        for (const auto& r : property_refs_)
            if (!elsets_.contains(r.name)) throw ParseError("undefined ELSET " + r.name, r.line, r.column);
    }

    struct NodeRef {
        long long label;
        std::size_t line, column;
    };
    struct NameRef {
        std::string name;
        std::size_t line, column;
    };

    std::string_view text_;
    std::vector<Card> cards_;
    InputDeck deck_;
    std::set<long long> node_labels_, element_labels_;
    std::map<std::string, int> types_;
    std::set<std::string> elsets_;
    std::vector<NodeRef> node_refs_;
    std::vector<NameRef> property_refs_;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

InputDeck parse_inp(std::string_view text) { return DeckParser(text).run(); }

InputDeck read_inp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_inp(ss.str());
}

std::string write_inp(const InputDeck& deck) {
    std::string out;
    out += "*NODE\n";
    for (const auto& n : deck.nodes) out += std::to_string(n.label) + ", " + num(n.x) + ", " + num(n.y) + "\n";
    for (const auto& t : deck.user_elements) {
        out += "*USER ELEMENT, NODES=" + std::to_string(t.nodes) + ", TYPE=" + t.type +
               ", PROPERTIES=" + std::to_string(t.properties) + ", COORDINATES=" + std::to_string(t.coordinates) + "\n";
        out += t.active_dof + "\n";
    }
    for (const auto& b : deck.blocks) {
        out += "*ELEMENT, TYPE=" + b.type + ", ELSET=" + b.elset + "\n";
        for (const auto& e : b.elements) {
            out += std::to_string(e.label);
            for (long long v : e.nodes) out += ", " + std::to_string(v);
            out += "\n";
        }
    }
    for (const auto& p : deck.properties) {
        out += "*UEL PROPERTY, ELSET=" + p.elset + "\n";
        out += num(p.material.conductivity) + ", " + num(p.material.density) + ", " + num(p.material.specific_heat) + "\n";
    }
    if (!deck.boundaries.empty()) {
        out += "*BOUNDARY-TEMP\n";
        for (const auto& b : deck.boundaries) out += b.edge_tag + ", " + b.expression + "\n";
    }
    if (deck.initial_temperature) out += "*INITIAL-TEMP\n" + *deck.initial_temperature + "\n";
    if (deck.step) {
        if (deck.step->transient) out += "*STEP-TRANSIENT, DT=" + num(deck.step->dt) + ", TIME=" + num(deck.step->t_end) + "\n";
        else out += "*STEP-STEADY\n";
    }
    return out;
}

InputDeck mesh_to_deck(const Mesh& mesh, const MaterialTable& materials, const std::string& type_prefix) {
    if (type_prefix != "U" && type_prefix != "UQT") throw ConfigError("element type prefix must be U or UQT");
    InputDeck deck;
    for (const auto& n : mesh.nodes)
        deck.nodes.push_back({static_cast<long long>(n.id) + 1, n.position.x, n.position.y});
    std::set<Index> mats;
    for (const auto& c : mesh.cells) mats.insert(c.material_id);
    std::map<std::pair<std::size_t, Index>, std::size_t> block_of;
    std::set<std::size_t> counts;
    for (const auto& c : mesh.cells) counts.insert(c.vertex_ids.size());
    for (std::size_t n : counts) {
        for (Index m : mats) block_of[{n, m}] = 0;
        deck.user_elements.push_back({type_prefix + std::to_string(n), static_cast<int>(n), 3, 2, "11"});
    }
    for (auto& [key, idx] : block_of) {
        idx = deck.blocks.size();
        const auto [n, m] = key;
        const std::string set = "E" + std::to_string(n) + (mats.size() > 1 ? "_M" + std::to_string(m) : "");
        deck.blocks.push_back({type_prefix + std::to_string(n), set, {}});
    }
    for (const auto& c : mesh.cells) {
        DeckElement e{static_cast<long long>(c.id) + 1, {}};
        for (Index v : c.vertex_ids) e.nodes.push_back(static_cast<long long>(v) + 1);
        deck.blocks[block_of.at({c.vertex_ids.size(), c.material_id})].elements.push_back(std::move(e));
    }
    std::erase_if(deck.blocks, [](const ElementBlock& b) { return b.elements.empty(); });
    for (const auto& b : deck.blocks) {
        const Index m = mesh.cells[static_cast<std::size_t>(b.elements.front().label - 1)].material_id;
        const auto it = materials.find(m);
        if (it == materials.end()) throw ConfigError("no material " + std::to_string(m) + " for the deck");
        deck.properties.push_back({b.elset, it->second});
    }
    return deck;
}

SolveCase deck_to_case(const InputDeck& deck) {
    SolveCase sc;
    std::unordered_map<long long, Index> node_index;
    for (const auto& n : deck.nodes) {
        const Index id = sc.mesh.nodes.size();
        node_index.emplace(n.label, id);
        sc.mesh.nodes.push_back({id, {n.x, n.y}});
        sc.node_labels.push_back(n.label);
    }
    std::map<std::string, Index> material_of;
    for (const auto& p : deck.properties) {
        const Index m = sc.materials.size();
        material_of.emplace(p.elset, m);
        sc.materials.emplace(m, p.material);
    }
    // Cells are numbered in element-label order, independent of card grouping.
    std::vector<std::pair<long long, PolygonCell>> cells;
    for (const auto& b : deck.blocks) {
        const auto it = material_of.find(b.elset);
        if (it == material_of.end()) throw ConfigError("element set " + b.elset + " has no *UEL PROPERTY");
        for (const auto& e : b.elements) {
            PolygonCell cell{0, {}, it->second};
            for (long long v : e.nodes) {
                const auto ni = node_index.find(v);
                if (ni == node_index.end())
                    throw ConfigError("element " + std::to_string(e.label) + " references undefined node " + std::to_string(v));
                cell.vertex_ids.push_back(ni->second);
            }
            cells.emplace_back(e.label, std::move(cell));
        }
    }
    std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [label, cell] : cells) {
        cell.id = sc.mesh.cells.size();
        sc.mesh.cells.push_back(std::move(cell));
        sc.element_labels.push_back(label);
    }
    if (sc.mesh.cells.empty()) throw ConfigError("deck defines no elements");
    tag_boundary_edges(sc.mesh);

    const ValidationReport report = validate_mesh(sc.mesh);
    if (!report.empty()) {
        std::string msg = "mesh validation failed: ";
        const std::size_t shown = std::min<std::size_t>(report.size(), 5);
        for (std::size_t i = 0; i < shown; ++i) {
            const auto& v = report[i];
            const bool cell_kind = v.kind != ViolationKind::NonManifoldEdge && v.kind != ViolationKind::BadTag &&
                                   v.kind != ViolationKind::NonFinite && v.id < sc.element_labels.size();
            if (i) msg += "; ";
            msg += cell_kind ? "element " + std::to_string(sc.element_labels[v.id]) + ": " + v.message : v.message;
        }
        if (report.size() > shown) msg += "; and " + std::to_string(report.size() - shown) + " more";
        throw MeshError(msg);
    }
    {
        // Orphan nodes would leave singular rows in the global system.
        std::vector<char> used(sc.mesh.nodes.size(), 0);
        for (const auto& c : sc.mesh.cells)
            for (Index v : c.vertex_ids) used[v] = 1;
        for (Index i = 0; i < used.size(); ++i)
            if (!used[i]) throw MeshError("node " + std::to_string(sc.node_labels[i]) + " belongs to no element");
    }

    for (const auto& b : deck.boundaries)
        sc.bcs.push_back(BoundaryCondition::dirichlet(b.edge_tag, Expression::parse(b.expression).field()));
    check_boundary_conditions(sc.mesh, sc.bcs);
    if (deck.initial_temperature) {
        const Expression e = Expression::parse(*deck.initial_temperature);
        sc.initial = [e](double x, double y) { return e(x, y, 0.0); };
    } else {
        sc.initial = [](double, double) { return 0.0; };
    }
    sc.step = deck.step.value_or(StepCard{});
    return sc;
}

}  // namespace psbfem
