"""Sample containers, pooled ranking and file IO."""
