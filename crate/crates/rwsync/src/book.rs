// placeholder until the book exists
