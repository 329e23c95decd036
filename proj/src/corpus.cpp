#include "cycle/corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cycle/edit_distance.hpp"
#include "cycle/rng.hpp"

namespace cycle {

namespace {

using nlohmann::json;

bool suite_equal(const std::vector<TestCase>& a, const std::vector<TestCase>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].inputs != b[i].inputs || a[i].expected != b[i].expected) return false;
    }
    return true;
}

struct Draft {
    std::string family;
    std::string description;
    int arity = 1;
    std::vector<std::string> canonicals;
};

std::string num_phrase(const char* pos_word, const char* neg_word, std::int64_t v) {
    // "plus 3" / "minus 3"; caller handles v == 0.
    std::ostringstream out;
    out << (v < 0 ? neg_word : pos_word) << ' ' << (v < 0 ? -v : v);
    return out.str();
}

std::string tail_expr(const std::string& base, std::int64_t c) {
    if (c == 0) return "return " + base;
    std::ostringstream out;
    out << "return " << base << (c < 0 ? " - " : " + ") << (c < 0 ? -c : c);
    return out.str();
}

Draft gen_affine(std::mt19937_64& g) {
    Draft d;
    d.family = "affine";
    d.arity = 1;
    std::int64_t a = rand_int(g, 2, 9);
    std::int64_t b = rand_int(g, -9, 9);
    std::ostringstream desc;
    desc << "given x, return " << a << " times x";
    if (b != 0) desc << ' ' << num_phrase("plus", "minus", b);
    desc << '.';
    d.description = desc.str();
    std::ostringstream code;
    code << a << " * x";
    d.canonicals.push_back(tail_expr(code.str(), b));
    if (b > 0) {
        std::ostringstream alt;
        alt << "return " << b << " + " << a << " * x";
        d.canonicals.push_back(alt.str());
    } else if (b == 0) {
        std::ostringstream alt;
        alt << "return x * " << a;
        d.canonicals.push_back(alt.str());
    } else {
        std::ostringstream alt;
        alt << "return (" << a << " * x) - " << -b;
        d.canonicals.push_back(alt.str());
    }
    return d;
}

Draft gen_minmax(std::mt19937_64& g) {
    Draft d;
    d.family = "min-max";
    d.arity = 2;
    bool larger = rand_int(g, 0, 1) == 0;
    std::int64_t c = rand_int(g, -9, 9);
    const char* word = larger ? "larger" : "smaller";
    const char* fn = larger ? "max" : "min";
    std::ostringstream desc;
    desc << "given x and y, return the " << word << " value";
    if (c != 0) desc << ' ' << num_phrase("plus", "minus", c);
    desc << '.';
    d.description = desc.str();
    std::string base = std::string(fn) + "(x, y)";
    std::string swapped = std::string(fn) + "(y, x)";
    d.canonicals.push_back(tail_expr(base, c));
    d.canonicals.push_back(tail_expr(swapped, c));
    if (c == 0) {
        d.canonicals.push_back(larger ? "return ite(lt(x, y), y, x)" : "return ite(lt(x, y), x, y)");
    }
    return d;
}

Draft gen_conditional(std::mt19937_64& g) {
    Draft d;
    d.family = "conditional";
    switch (rand_int(g, 0, 3)) {
        case 0: {
            d.arity = 2;
            d.description = "given x and y, return x if x is less than y, otherwise y.";
            d.canonicals = {"return ite(lt(x, y), x, y)", "return min(x, y)"};
            break;
        }
        case 1: {
            d.arity = 2;
            d.description = "given x and y, return y if x is less than y, otherwise x.";
            d.canonicals = {"return ite(lt(x, y), y, x)", "return max(x, y)"};
            break;
        }
        case 2: {
            d.arity = 2;
            std::int64_t a = rand_int(g, 0, 9);
            std::int64_t b = rand_int(g, 0, 9);
            while (b == a) b = rand_int(g, 0, 9);
            std::ostringstream desc;
            desc << "given x and y, return " << a << " if x equals y, otherwise " << b << '.';
            d.description = desc.str();
            std::ostringstream code;
            code << "return ite(eq(x, y), " << a << ", " << b << ')';
            d.canonicals = {code.str()};
            break;
        }
        default: {
            d.arity = 1;
            std::int64_t c = rand_int(g, -9, 9);
            std::ostringstream desc;
            desc << "given x, return the absolute value of x";
            if (c != 0) desc << ' ' << num_phrase("plus", "minus", c);
            desc << '.';
            d.description = desc.str();
            d.canonicals.push_back(tail_expr("abs(x)", c));
            d.canonicals.push_back(tail_expr("ite(lt(x, 0), 0 - x, x)", c));
            break;
        }
    }
    return d;
}

Draft gen_composite(std::mt19937_64& g) {
    Draft d;
    d.family = "composite";
    switch (rand_int(g, 0, 3)) {
        case 0: {
            d.arity = 2;
            std::int64_t a = rand_int(g, 2, 9);
            std::int64_t b = rand_int(g, -9, 9);
            bool larger = rand_int(g, 0, 1) == 0;
            const char* word = larger ? "larger" : "smaller";
            const char* fn = larger ? "max" : "min";
            std::ostringstream desc;
            desc << "given x and y, compute the " << word << " value, then return " << a
                 << " times it";
            if (b != 0) desc << ' ' << num_phrase("plus", "minus", b);
            desc << '.';
            d.description = desc.str();
            std::ostringstream head;
            head << a << " * t0";
            d.canonicals.push_back("t0 = " + std::string(fn) + "(x, y)\n" + tail_expr(head.str(), b));
            std::ostringstream flat;
            flat << a << " * " << fn << "(x, y)";
            d.canonicals.push_back(tail_expr(flat.str(), b));
            break;
        }
        case 1: {
            d.arity = 3;
            bool largest = rand_int(g, 0, 1) == 0;
            const char* word = largest ? "largest" : "smallest";
            const char* fn = largest ? "max" : "min";
            d.description = std::string("given x, y and z, return the ") + word + " value.";
            d.canonicals.push_back("t0 = " + std::string(fn) + "(x, y)\nreturn " + fn + "(t0, z)");
            d.canonicals.push_back(std::string("return ") + fn + "(" + fn + "(x, y), z)");
            break;
        }
        case 2: {
            d.arity = 2;
            std::int64_t c = rand_int(g, -9, 9);
            std::ostringstream desc;
            desc << "given x and y, return the absolute difference of x and y";
            if (c != 0) desc << ' ' << num_phrase("plus", "minus", c);
            desc << '.';
            d.description = desc.str();
            d.canonicals.push_back("t0 = x - y\n" + tail_expr("abs(t0)", c));
            d.canonicals.push_back(tail_expr("abs(x - y)", c));
            d.canonicals.push_back(tail_expr("max(x - y, y - x)", c));
            break;
        }
        default: {
            d.arity = 3;
            std::int64_t a = rand_int(g, 2, 9);
            std::ostringstream desc;
            desc << "given x, y and z, return x plus y plus " << a << " times z.";
            d.description = desc.str();
            std::ostringstream code;
            code << "return x + y + " << a << " * z";
            d.canonicals.push_back(code.str());
            std::ostringstream alt;
            alt << "t0 = " << a << " * z\nreturn x + y + t0";
            d.canonicals.push_back(alt.str());
            break;
        }
    }
    return d;
}

std::vector<TestCase> make_suite(const Draft& draft, std::mt19937_64& g) {
    std::set<std::vector<std::int64_t>> seen;
    std::vector<std::vector<std::int64_t>> inputs;
    auto push = [&](std::vector<std::int64_t> v) {
        if (seen.insert(v).second) inputs.push_back(std::move(v));
    };
    switch (draft.arity) {
        case 1:
            push({0});
            push({1});
            push({-2});
            break;
        case 2:
            push({0, 0});
            push({1, -2});
            push({-3, 5});
            break;
        default:
            push({0, 0, 0});
            push({1, -2, 3});
            push({-3, 5, -1});
            break;
    }
    while (inputs.size() < 5) {
        std::vector<std::int64_t> v;
        for (int i = 0; i < draft.arity; ++i) v.push_back(rand_int(g, -9, 9));
        push(std::move(v));
    }
    Program reference = parse(draft.canonicals.front());
    std::vector<TestCase> suite;
    for (auto& in : inputs) {
        ExecResult res = execute(reference, in);
        if (!res.ok) throw std::logic_error("canonical solution failed during generation");
        suite.push_back(TestCase{std::move(in), res.value});
    }
    return suite;
}

}  // namespace

bool Problem::operator==(const Problem& other) const {
    return id == other.id && description == other.description && arity == other.arity &&
           canonical_solutions == other.canonical_solutions && suite_equal(suite, other.suite) &&
           split == other.split;
}

bool Dataset::operator==(const Dataset& other) const {
    return problems == other.problems && seed == other.seed &&
           generator_version == other.generator_version;
}

std::vector<const Problem*> Dataset::split(const std::string& name) const {
    std::vector<const Problem*> out;
    for (const Problem& p : problems) {
        if (p.split == name) out.push_back(&p);
    }
    return out;
}

Dataset generate_problems(std::uint64_t seed, const std::map<std::string, int>& count_per_split,
                          const FamilyWeights& family_mix) {
    if (count_per_split.empty()) throw InvalidConfig("no splits requested");
    double total_weight = 0.0;
    for (double w : family_mix) {
        if (w < 0.0) throw InvalidConfig("negative family weight");
        total_weight += w;
    }
    if (std::abs(total_weight - 1.0) > 1e-9) throw InvalidConfig("family weights must sum to 1");
    for (const auto& [name, count] : count_per_split) {
        if (name != "train" && name != "valid" && name != "test") {
            throw InvalidConfig("unknown split: " + name);
        }
        if (count < 1) throw InvalidConfig("split count must be >= 1");
    }

    Dataset dataset;
    dataset.seed = seed;
    std::mt19937_64 g(derive_seed(seed, "corpus"));
    std::set<std::string> seen_descriptions;
    int counter = 0;
    for (const char* split_name : {"train", "valid", "test"}) {
        auto it = count_per_split.find(split_name);
        if (it == count_per_split.end()) continue;
        for (int i = 0; i < it->second; ++i) {
            Draft draft;
            bool fresh = false;
            for (int attempt = 0; attempt < 500 && !fresh; ++attempt) {
                double pick = rand_real(g) * total_weight;
                int family = 0;
                double acc = 0.0;
                for (int f = 0; f < 4; ++f) {
                    acc += family_mix[static_cast<std::size_t>(f)];
                    if (pick < acc) {
                        family = f;
                        break;
                    }
                }
                switch (family) {
                    case 0: draft = gen_affine(g); break;
                    case 1: draft = gen_minmax(g); break;
                    case 2: draft = gen_conditional(g); break;
                    default: draft = gen_composite(g); break;
                }
                fresh = seen_descriptions.insert(draft.description).second;
            }
            if (!fresh) {
                throw InvalidConfig("could not generate enough distinct problems; reduce counts");
            }
            Problem problem;
            std::ostringstream id;
            id << draft.family << '-' << split_name << '-';
            id.width(4);
            id.fill('0');
            id << counter++;
            problem.id = id.str();
            problem.description = draft.description;
            problem.arity = draft.arity;
            problem.canonical_solutions = draft.canonicals;
            problem.suite = make_suite(draft, g);
            problem.split = split_name;
            for (const std::string& sol : problem.canonical_solutions) {
                if (!run_tests(sol, problem.suite).all_pass) {
                    throw std::logic_error("canonical variant failed its suite: " + sol);
                }
            }
            dataset.problems.push_back(std::move(problem));
        }
    }
    return dataset;
}

Dataset filter_by_length(const Dataset& dataset, const Vocab& vocab, int max_tokens) {
    Dataset out;
    out.seed = dataset.seed;
    out.generator_version = dataset.generator_version;
    for (const Problem& p : dataset.problems) {
        if (static_cast<int>(vocab.encode(p.description).size()) <= max_tokens) {
            out.problems.push_back(p);
        }
    }
    return out;
}

Dataset fuzzy_dedup(const Dataset& eval_set, const Dataset& train_set, double threshold) {
    Dataset out;
    out.seed = eval_set.seed;
    out.generator_version = eval_set.generator_version;
    for (const Problem& p : eval_set.problems) {
        bool leaked = false;
        for (const Problem& t : train_set.problems) {
            if (normalized_similarity(p.description, t.description) > threshold) {
                leaked = true;
                break;
            }
        }
        if (!leaked) out.problems.push_back(p);
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset file: " + path);
    json header = {{"schema", kCorpusSchema},
                   {"seed", dataset.seed},
                   {"generator_version", dataset.generator_version}};
    out << header.dump() << '\n';
    for (const Problem& p : dataset.problems) {
        json suite = json::array();
        for (const TestCase& tc : p.suite) {
            suite.push_back({{"in", tc.inputs}, {"out", tc.expected}});
        }
        json line = {{"id", p.id},
                     {"description", p.description},
                     {"arity", p.arity},
                     {"canonical", p.canonical_solutions},
                     {"suite", suite},
                     {"split", p.split}};
        out << line.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read dataset file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty dataset file: " + path);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed dataset header: ") + e.what());
    }
    if (!header.contains("schema") || header["schema"] != kCorpusSchema) {
        throw SchemaError("unexpected corpus schema: " + header.value("schema", "<missing>"));
    }
    Dataset dataset;
    dataset.seed = header.value("seed", std::uint64_t{0});
    dataset.generator_version = header.value("generator_version", "");
    if (dataset.generator_version != kGeneratorVersion) {
        throw SchemaError("unknown generator_version: " + dataset.generator_version);
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            Problem p;
            p.id = j.at("id").get<std::string>();
            p.description = j.at("description").get<std::string>();
            p.arity = j.at("arity").get<int>();
            p.canonical_solutions = j.at("canonical").get<std::vector<std::string>>();
            for (const auto& c : j.at("suite")) {
                TestCase tc;
                tc.inputs = c.at("in").get<std::vector<std::int64_t>>();
                tc.expected = c.at("out").get<std::int64_t>();
                p.suite.push_back(std::move(tc));
            }
            p.split = j.at("split").get<std::string>();
            dataset.problems.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw SchemaError("malformed dataset line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return dataset;
}

}  // namespace cycle
