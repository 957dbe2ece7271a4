"""Mixed finite elements for the Voigt-regularised Hall-MHD equations."""
