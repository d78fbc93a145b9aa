"""Closed paralinguistic tag vocabularies shared by the text vocab and the data factory."""

EMOTIONS = ("neutral", "happy", "sad", "angry", "surprised", "fearful", "disgusted")
AGES = ("child", "adult", "elderly")
GENDERS = ("female", "male")

# Delivery tones for synthesized responses; distinct from the query emotions above.
RESPONSE_EMOTIONS = (
    "neutral",
    "cheerful",
    "comforting-calm",
    "gentle-reassuring",
    "encouraging",
    "serious-concerned",
    "playful",
)

LANGUAGES = ("en", "zh")
