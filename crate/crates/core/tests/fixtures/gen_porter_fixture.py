"""Regenerate porter_vocab.tsv: word<TAB>stem pairs from NLTK's PorterStemmer
in MARTIN_EXTENSIONS mode (Martin Porter's reference implementation).

Usage: gen_porter_fixture.py OUT [TEXT_FILE...]. Every word in the text files
is added to a fixed list of classic stemmer test words."""
import pathlib
import re
import sys

from nltk.stem.porter import PorterStemmer

EXTRA = """caresses ponies ties caress cats feed agreed plastered bled motoring sing
conflated troubled sized hopping tanned falling hissing fizzed failing filing happy sky
relational conditional rational valenci hesitanci digitizer conformabli radicalli
differentli vileli analogousli vietnamization predication operator feudalism decisiveness
hopefulness callousness formaliti sensitiviti sensibiliti triplicate formative formalize
electriciti electrical hopeful goodness revival allowance inference airliner gyroscopic
adjustable defensible irritant replacement adjustment dependent adoption homologou
communism activate angulariti homologous effective bowdlerize probate rate cease
controll roll generalizations oscillators archaeology logi biomaterials nano
coronavirus pangolins bats molecular evidence hosts virus 2002 ace2 covid 19 sars""".split()

def main(out, sources):
    words = set(EXTRA)
    for path in sources:
        text = pathlib.Path(path).read_text(errors="ignore").lower()
        words.update(w for w in re.findall(r"[a-z]+", text) if len(w) <= 24)
    stemmer = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)
    with open(out, "w") as fh:
        for w in sorted(words):
            fh.write(f"{w}\t{stemmer.stem(w, to_lowercase=True)}\n")

if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "porter_vocab.tsv", sys.argv[2:])
