// Deterministic generator for the toy training corpus shipped in data/.
//
// The text has to be hard enough that an 8-layer/64-dim byte model is under
// capacity: a large compositional vocabulary (syllable-built stems reused
// consistently), several document styles, recurring subjects, quantities
// that stay arithmetically consistent inside a sentence, and dates. Nothing
// is copied from third-party text.

#include <cstdio>
#include <string>
#include <vector>

#include "comp/rng.hpp"

namespace {

const std::vector<std::string> kOnsets = {"b",  "br", "c",  "cl", "d",  "dr", "f",  "fl",
                                          "g",  "gr", "h",  "j",  "k",  "l",  "m",  "n",
                                          "p",  "pl", "qu", "r",  "s",  "sk", "sl", "st",
                                          "t",  "tr", "v",  "w",  "z",  "sh", "th", "ch"};
const std::vector<std::string> kVowels = {"a", "e", "i", "o", "u", "ai", "ea", "ou", "ie", "oa"};
const std::vector<std::string> kCodas = {"",   "n",  "r",  "l",  "s",  "t",  "m",  "nd",
                                         "rn", "st", "ck", "sh", "rt", "mp", "ng", "x"};

const std::vector<std::string> kMonths = {"january",   "february", "march",    "april",
                                          "may",       "june",     "july",     "august",
                                          "september", "october",  "november", "december"};

const std::vector<std::string> kGlueAdj = {"old",  "new",   "small", "large", "fine",
                                           "rough", "dark", "light", "upper", "lower"};

struct Lexicon {
    std::vector<std::string> nouns, verbs, adjectives, places, names, materials;
};

std::string make_stem(comp::Rng& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng.uniform_below(kOnsets.size())];
        w += kVowels[rng.uniform_below(kVowels.size())];
        if (s + 1 == syllables || rng.uniform() < 0.4)
            w += kCodas[rng.uniform_below(kCodas.size())];
    }
    return w;
}

Lexicon build_lexicon(std::uint64_t seed) {
    comp::Rng rng(seed);
    Lexicon lex;
    auto fill = [&](std::vector<std::string>& out, std::size_t count, std::size_t min_syl,
                    std::size_t max_syl) {
        while (out.size() < count) {
            std::string w = make_stem(rng, min_syl + rng.uniform_below(max_syl - min_syl + 1));
            if (w.size() >= 3 && w.size() <= 12) out.push_back(w);
        }
    };
    fill(lex.nouns, 420, 2, 3);
    fill(lex.verbs, 200, 1, 2);
    fill(lex.adjectives, 160, 2, 3);
    fill(lex.places, 120, 2, 3);
    fill(lex.materials, 80, 2, 2);
    while (lex.names.size() < 96) {
        std::string w = make_stem(rng, 2);
        if (w.size() < 4 || w.size() > 9) continue;
        w[0] = static_cast<char>(w[0] - 'a' + 'A');
        lex.names.push_back(w);
    }
    return lex;
}

struct Gen {
    comp::Rng rng;
    const Lexicon& lex;
    std::string subject, partner, place;

    Gen(std::uint64_t seed, const Lexicon& l) : rng(seed), lex(l) {}

    const std::string& pick(const std::vector<std::string>& v) {
        return v[rng.uniform_below(v.size())];
    }

    unsigned uniform(unsigned lo, unsigned hi) {
        return lo + static_cast<unsigned>(rng.uniform_below(hi - lo + 1));
    }

    std::string past(const std::string& verb) {
        if (verb.back() == 'e') return verb + "d";
        return verb + "ed";
    }
    std::string ing(const std::string& verb) {
        if (verb.back() == 'e') return verb.substr(0, verb.size() - 1) + "ing";
        return verb + "ing";
    }
    std::string plural(const std::string& noun) {
        if (noun.back() == 's' || noun.back() == 'x' || noun.back() == 'h') return noun + "es";
        return noun + "s";
    }

    std::string date_phrase() {
        return "on " + std::to_string(uniform(1, 28)) + " " + pick(kMonths) + " 18" +
               std::to_string(uniform(10, 99));
    }

    // Quantities that stay consistent: a - b = c is computed, not sampled.
    std::string arithmetic_sentence() {
        const unsigned got = uniform(6, 60);
        const unsigned sent = uniform(1, got - 1);
        const unsigned left = got - sent;
        return "The " + pick(lex.places) + " store took in " + std::to_string(got) + " " +
               plural(pick(lex.nouns)) + ", sent " + std::to_string(sent) +
               " away, and kept " + std::to_string(left) + ".";
    }

    std::string ledger_line() {
        const unsigned count = uniform(2, 95);
        const unsigned price = uniform(2, 40);
        return "  " + std::to_string(count) + " " + plural(pick(lex.nouns)) + " of " +
               pick(lex.materials) + " at " + std::to_string(price) + " marks each, total " +
               std::to_string(count * price) + " marks";
    }

    std::string narrative_sentence() {
        switch (rng.uniform_below(10)) {
            case 0:
                return "The " + pick(lex.adjectives) + " " + pick(lex.nouns) + " " +
                       past(pick(lex.verbs)) + " the " + pick(lex.nouns) + " near the " +
                       pick(lex.places) + ".";
            case 1:
                return subject + " " + past(pick(lex.verbs)) + " a " + pick(kGlueAdj) + " " +
                       pick(lex.nouns) + " " + date_phrase() + ".";
            case 2:
                return "While " + ing(pick(lex.verbs)) + " along the " + place + ", " + subject +
                       " found " + std::to_string(uniform(2, 150)) + " " +
                       plural(pick(lex.nouns)) + ".";
            case 3:
                return arithmetic_sentence();
            case 4:
                return "\"Has the " + pick(lex.nouns) + " been " + past(pick(lex.verbs)) +
                       "?\" asked " + partner + ", but " + subject + " was still " +
                       ing(pick(lex.verbs)) + " at the " + place + ".";
            case 5:
                return "Between the " + pick(lex.places) + " and the " + place + " lay " +
                       std::to_string(uniform(2, 40)) + " miles of " + pick(lex.adjectives) +
                       " " + plural(pick(lex.nouns)) + ".";
            case 6:
                return "If the " + pick(lex.nouns) + " holds, " + subject + " will " +
                       pick(lex.verbs) + " the " + pick(lex.nouns) + " before " + partner +
                       " returns from the " + pick(lex.places) + ".";
            case 7:
                return "Nobody " + past(pick(lex.verbs)) + " the " + pick(lex.adjectives) + " " +
                       pick(lex.nouns) + ", though " + subject + " and " + partner +
                       " had asked twice " + date_phrase() + ".";
            case 8:
                return "A " + pick(lex.adjectives) + " " + pick(lex.nouns) + " of " +
                       pick(lex.materials) + " stood by the " + place + ", " +
                       ing(pick(lex.verbs)) + " slowly in the wind.";
            default:
                return "The " + pick(lex.nouns) + " from the " + pick(lex.places) +
                       " proved " + pick(lex.adjectives) + ", so " + subject + " " +
                       past(pick(lex.verbs)) + " it " + date_phrase() + ".";
        }
    }

    std::string letter_block() {
        std::string s = "Dear " + partner + ",\n";
        const std::size_t n = 2 + rng.uniform_below(3);
        for (std::size_t i = 0; i < n; ++i) s += narrative_sentence() + " ";
        s += "\nYours, " + subject + ".\n\n";
        return s;
    }

    std::string ledger_block() {
        std::string s = "Ledger of the " + pick(lex.places) + ", " + date_phrase() + ":\n";
        const std::size_t n = 2 + rng.uniform_below(4);
        for (std::size_t i = 0; i < n; ++i) s += ledger_line() + "\n";
        return s + "\n";
    }

    std::string paragraph() {
        subject = pick(lex.names);
        partner = pick(lex.names);
        place = pick(lex.places);
        const double style = rng.uniform();
        if (style < 0.14) return ledger_block();
        if (style < 0.26) return letter_block();
        const std::size_t n = 3 + rng.uniform_below(5);
        std::string p;
        for (std::size_t i = 0; i < n; ++i) {
            if (i) p += " ";
            p += narrative_sentence();
        }
        return p + "\n\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    const std::size_t target = (argc > 1) ? std::stoul(argv[1]) : (1 << 20);
    Lexicon lex = build_lexicon(771020);
    Gen gen(20240601, lex);
    std::string out;
    out.reserve(target + 4096);
    while (out.size() < target) out += gen.paragraph();
    out.resize(target);
    std::fwrite(out.data(), 1, out.size(), stdout);
    return 0;
}
