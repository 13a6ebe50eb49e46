"""Market making under maker-taker fees with independent Q-learners."""
