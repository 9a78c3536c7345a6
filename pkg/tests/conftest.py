import pytest

from videokg.lexicon import load_lexicon

# Small lexical database exercising every structural case the graph code
# needs: shared hypernyms, multiple senses, verbs with disjoint roots.
FIXTURE_LEXICON = """\
entity.n.01|entity|that which is perceived or known to exist|
person.n.01|person,human|a human being|entity.n.01
policeman.n.01|policeman|a member of a police force|person.n.01
chef.n.01|chef|a professional cook in a restaurant kitchen|person.n.01
man.n.01|man|an adult male person|person.n.01
artifact.n.01|artifact|a man-made object|entity.n.01
car.n.01|car,auto|a motor vehicle with four wheels|artifact.n.01
ship.n.01|ship|a large vessel that travels over the sea|artifact.n.01
face_mask.n.01|face_mask,mask|a protective covering worn over the face|artifact.n.01
knife.n.01|knife|a cutting tool with a sharp blade|artifact.n.01
kitchen.n.01|kitchen|a room equipped for preparing food|artifact.n.01
animal.n.01|animal|a living organism that can move|entity.n.01
horse.n.01|horse|a solid-hoofed herbivorous animal|animal.n.01
dog.n.01|dog|a domesticated carnivorous animal|animal.n.01
sea.n.01|sea|a large body of salt water|entity.n.01
bank.n.01|bank|a financial institution that accepts deposits of money|artifact.n.01
bank.n.02|bank|sloping land beside a body of river water|entity.n.01
ride.v.01|ride|sit on and control the movement of an animal|move.v.01
move.v.01|move|change position or place|
hold.v.01|hold|have or keep something in the hand|
"""


@pytest.fixture(scope="session")
def lexicon_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("lexicon") / "fixture_lexicon.txt"
    path.write_text(FIXTURE_LEXICON, encoding="utf-8")
    return path


@pytest.fixture()
def lexicon(lexicon_path):
    # function-scoped: tests register virtual synsets destructively
    return load_lexicon(lexicon_path)
