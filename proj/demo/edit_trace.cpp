// Locates a judge quote inside a reasoning trace and prints each edit the
// intervention stage would make to it, plus the chrF of two outputs.
//   edit_trace [trace-file] [quote]

#include <cstdio>
#include <iostream>

#include "mtaudit/evaluate.hpp"
#include "mtaudit/intervene.hpp"

using namespace mtaudit;

int main(int argc, char** argv) {
    std::string trace =
        "The source mentions Federer and a final set. “Served” here means sacar in tennis. "
        "I will translate \"brilliantly\" as brillantemente.\n\nThe final set is \"el set final\".";
    std::string quote = "\"served\" here means sacar";
    if (argc > 1) trace = read_file(argv[1]);
    if (argc > 2) quote = argv[2];

    auto tok = tokenize_trace(trace);
    std::cout << "sentences:\n";
    for (const auto& s : tok.sentences) std::cout << "  [" << s.index << "] " << s.text << "\n";

    auto span = locate_edit_span(quote, 1, trace, tok);
    if (!span) {
        std::cout << "quote not locatable\n";
        return 1;
    }
    std::cout << "\nmatched by " << to_string(span->matched_by) << ", sentences " << span->first_sentence << ".."
              << span->last_sentence << "\n";
    std::cout << "\n-- hedged --\n" << hedge(trace, *span) << "\n";
    std::cout << "\n-- removed --\n" << remove(trace, *span) << "\n";
    std::cout << "\n-- re-reason prefix --\n" << rereason_prefix(trace, *span) << "\n";

    const std::string ref = "Federer sirvió de forma brillante en el último set.";
    std::printf("\nchrF(sacó, ref)   = %.4f\n", chrf("Federer sacó brillantemente en el set final.", ref));
    std::printf("chrF(sirvió, ref) = %.4f\n", chrf("Federer sirvió brillantemente en el último set.", ref));
    return 0;
}
