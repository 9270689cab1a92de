#include "film/synthetic.hpp"

#include <array>
#include <string_view>

#include "film/common.hpp"

namespace film {

namespace {

template <typename C>
const auto& pick(const C& options, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    return options[d(rng)];
}

struct Subject {
    std::string_view text;
    std::array<std::string_view, 3> verbs;
};

struct Verb {
    std::string_view text;
    std::array<std::string_view, 3> objects;
};

constexpr std::array<Subject, 6> kSubjects{{
    {"the cat", {"sees", "chases", "eats"}},
    {"a dog", {"finds", "chases", "wants"}},
    {"my friend", {"likes", "buys", "finds"}},
    {"the old man", {"reads", "sees", "buys"}},
    {"a bird", {"eats", "sees", "wants"}},
    {"the girl", {"likes", "reads", "buys"}},
}};

constexpr std::array<Verb, 8> kVerbs{{
    {"sees", {"the moon", "a red box", "the river"}},
    {"chases", {"a mouse", "the ball", "a red box"}},
    {"eats", {"some bread", "a fish", "a green apple"}},
    {"finds", {"a key", "the ball", "some bread"}},
    {"wants", {"a fish", "the moon", "a key"}},
    {"likes", {"the river", "a green apple", "a song"}},
    {"buys", {"some bread", "a hat", "a key"}},
    {"reads", {"a book", "the news", "a letter"}},
}};

constexpr std::array<std::string_view, 5> kEndings{"", " today", " again", " at home", " in the park"};

std::string_view object_for(std::string_view verb, Rng& rng) {
    for (const Verb& v : kVerbs) {
        if (v.text == verb) return pick(v.objects, rng);
    }
    return "a thing";
}

std::string sentence(Rng& rng) {
    const Subject& s = pick(kSubjects, rng);
    const std::string_view verb = pick(s.verbs, rng);
    std::string out(s.text);
    out += ' ';
    out += verb;
    out += ' ';
    out += object_for(verb, rng);
    out += pick(kEndings, rng);
    out += '.';
    return out;
}

constexpr std::array<std::string_view, 6> kNames{"ann", "bob", "kim", "tom", "eva", "max"};
constexpr std::array<std::string_view, 4> kPlaces{"the shop", "the lake", "school", "the farm"};
constexpr std::array<std::string_view, 4> kItems{"a kite", "a cake", "a lamp", "a coat"};

}  // namespace

std::string synthetic_text(std::size_t approx_chars, std::uint64_t seed) {
    Rng rng(seed);
    std::string out;
    while (out.size() < approx_chars) {
        if (!out.empty()) out += ' ';
        out += sentence(rng);
    }
    return out;
}

std::vector<std::vector<std::string>> synthetic_stories(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::string>> stories;
    stories.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::string name(pick(kNames, rng));
        const std::string place(pick(kPlaces, rng));
        const std::string item(pick(kItems, rng));
        stories.push_back({
            name + " went to " + place + ".",
            "there " + name + " saw " + item + ".",
            name + " wanted " + item + " very much.",
            "so " + name + " bought " + item + ".",
            name + " was happy at " + place + ".",
        });
    }
    return stories;
}

}  // namespace film
